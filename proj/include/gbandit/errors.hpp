#pragma once

#include <stdexcept>
#include <string>

namespace gbandit {

// Library-wide error carrying a coarse failure kind so callers can map
// failures to exit codes / reports without string matching.
class Error : public std::runtime_error {
public:
    enum class Kind {
        invalid_input,            // malformed arguments (dimension mismatch, bad range)
        out_of_validated_range,   // input outside the domain the routine is certified for
        degenerate_interval,      // truncation / conditioning interval has ~zero mass
        conditioning_too_extreme, // Monte-Carlo acceptance rate below the hard floor
        contract_violation,       // a caller-supplied object broke its documented contract
    };

    Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

} // namespace gbandit
