#ifndef KOOPMAN_ERRORS_HPP
#define KOOPMAN_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

#ifndef KOOPMAN_VERSION
#define KOOPMAN_VERSION "0.1.0"
#endif

namespace koopman {

inline constexpr const char* tool_version = KOOPMAN_VERSION;

/// Vector or matrix dimensions do not agree with the system or model.
class dimension_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A user-supplied configuration value is out of range or inconsistent.
/// `path` holds a JSON pointer (or dotted field path) to the offending field.
class config_error : public std::invalid_argument {
public:
    config_error(std::string path, const std::string& what)
        : std::invalid_argument(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// Malformed model / dataset document. `path` is a JSON pointer.
class parse_error : public std::runtime_error {
public:
    parse_error(std::string path, const std::string& what)
        : std::runtime_error("parse error at '" + path + "': " + what), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// The ODE integration produced a non-finite state.
class integration_error : public std::runtime_error {
public:
    integration_error(std::size_t sample, const std::string& what)
        : std::runtime_error(what + " (sample " + std::to_string(sample) + ")"), sample_(sample) {}
    std::size_t sample() const noexcept { return sample_; }

private:
    std::size_t sample_;
};

/// A surrogate rollout left the finite range.
class divergence_error : public std::runtime_error {
public:
    explicit divergence_error(std::size_t sample)
        : std::runtime_error("latent rollout diverged at sample " + std::to_string(sample)),
          sample_(sample) {}
    std::size_t sample() const noexcept { return sample_; }

private:
    std::size_t sample_;
};

/// Non-finite loss or gradient during optimisation.
class training_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace koopman

#endif // KOOPMAN_ERRORS_HPP
