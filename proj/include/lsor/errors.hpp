#pragma once

#include <stdexcept>
#include <string>

namespace lsor {

// Base for everything the library throws on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define LSOR_ERROR(Name)                      \
    class Name : public Error {               \
    public:                                   \
        using Error::Error;                   \
    }

LSOR_ERROR(DimensionError);
LSOR_ERROR(EvaluationError);
LSOR_ERROR(NoTimeScaleSeparation);
LSOR_ERROR(NewtonDivergence);
LSOR_ERROR(SingularJacobian);
LSOR_ERROR(NotAnEquilibrium);
LSOR_ERROR(EigenvalueFailure);
LSOR_ERROR(NotHurwitz);
LSOR_ERROR(SolveFailure);
LSOR_ERROR(InfeasibleConstants);
LSOR_ERROR(NoFeasibleEpsilon);
LSOR_ERROR(GridMismatch);
LSOR_ERROR(StepSizeUnderflow);
LSOR_ERROR(MaxStepsExceeded);
LSOR_ERROR(SingularNetwork);
LSOR_ERROR(SingularFastBlock);
LSOR_ERROR(ConfigError);

#undef LSOR_ERROR

enum class Assumption { Growth = 1, RomStability = 2, BlmStability = 3, EpsilonBound = 4 };

inline const char* assumption_name(Assumption a) {
    switch (a) {
    case Assumption::Growth: return "Assumption 1";
    case Assumption::RomStability: return "Assumption 2";
    case Assumption::BlmStability: return "Assumption 3";
    case Assumption::EpsilonBound: return "epsilon bound";
    }
    return "?";
}

class AssessmentFailed : public Error {
public:
    AssessmentFailed(Assumption a, const std::string& why)
        : Error(std::string(assumption_name(a)) + ": " + why), which(a) {}
    Assumption which;
};

} // namespace lsor
