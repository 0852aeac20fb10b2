#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace drqft {

enum class error_code {
    pole_proximity,
    sample_time_mismatch,
    improper_tf,
    non_convergence,
    unsupported_multiplicity,
    singular_loop,
    delta_support,
    zero_reference_spectrum,
    on_circle_pole,
    tangential_crossing,
    insufficient_steady_state,
    non_positive_inertia,
    invalid_argument,
    schema,
};

constexpr std::string_view to_string(error_code c) noexcept {
    switch (c) {
    case error_code::pole_proximity: return "PoleProximity";
    case error_code::sample_time_mismatch: return "SampleTimeMismatch";
    case error_code::improper_tf: return "ImproperTF";
    case error_code::non_convergence: return "NonConvergence";
    case error_code::unsupported_multiplicity: return "UnsupportedMultiplicity";
    case error_code::singular_loop: return "SingularLoop";
    case error_code::delta_support: return "DeltaSupport";
    case error_code::zero_reference_spectrum: return "ZeroReferenceSpectrum";
    case error_code::on_circle_pole: return "OnCirclePole";
    case error_code::tangential_crossing: return "TangentialCrossing";
    case error_code::insufficient_steady_state: return "InsufficientSteadyState";
    case error_code::non_positive_inertia: return "NonPositiveInertia";
    case error_code::invalid_argument: return "InvalidArgument";
    case error_code::schema: return "Schema";
    }
    return "Unknown";
}

class error : public std::runtime_error {
public:
    error(error_code code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    error_code code() const noexcept { return code_; }

private:
    error_code code_;
};

[[noreturn]] inline void fail(error_code code, const std::string& what) { throw error(code, what); }

} // namespace drqft
