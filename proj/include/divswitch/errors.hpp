#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace divswitch {

/// Malformed or inconsistent configuration input. `rule` matches the
/// validation rule id when the input breaks a model assumption, otherwise
/// it is "schema".
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what, std::string rule = "schema")
        : std::runtime_error(what), rule_(std::move(rule)) {}
    const std::string& rule() const noexcept { return rule_; }

private:
    std::string rule_;
};

/// A numerical procedure could not produce a certified result
/// (singular system, iteration cap, threshold pinned at x_max).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Threshold search ran off the truncated domain; x_max has to grow.
class ThresholdCapped : public NumericalError {
public:
    explicit ThresholdCapped(const std::string& what) : NumericalError(what) {}
};

}  // namespace divswitch
