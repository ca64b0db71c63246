#pragma once

#include <array>
#include <string>
#include <string_view>

namespace enose {

// Wine spoilage thresholds by volatile acidity, plus the ethanol control
// class that only appears in the four-class experiment.
enum class ClassLabel { HQ = 0, AQ = 1, LQ = 2, Ea = 3 };

inline constexpr std::array<ClassLabel, 4> kAllLabels{
    ClassLabel::HQ, ClassLabel::AQ, ClassLabel::LQ, ClassLabel::Ea};

std::string_view to_string(ClassLabel label);

// Throws ParseError on anything other than HQ/AQ/LQ/Ea.
ClassLabel parse_label(std::string_view text);

inline bool is_wine(ClassLabel label) { return label != ClassLabel::Ea; }

enum class Experiment {
    ThreeClass, // exp1: HQ/AQ/LQ
    FourClass,  // exp2: HQ/AQ/LQ/Ea
};

std::string_view to_string(Experiment e);
Experiment parse_experiment(std::string_view text);

} // namespace enose
