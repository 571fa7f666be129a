#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace cmcss {

// Base class for every error raised by the library. `kind()` is the short
// machine-readable tag the CLI puts in its error JSON.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& m) : Error("config", m) {}
};

// Configuration rejected for several reasons at once.
class ConfigIssues : public ConfigError {
public:
    explicit ConfigIssues(std::vector<std::string> issues)
        : ConfigError(join(issues)), issues_(std::move(issues)) {}
    const std::vector<std::string>& issues() const noexcept { return issues_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out;
        for (const auto& s : v) out += (out.empty() ? "" : "; ") + s;
        return out;
    }
    std::vector<std::string> issues_;
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& m) : Error("shape", m) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& m) : Error("numeric", m) {}
};

struct ContractError : Error {
    explicit ContractError(const std::string& m) : Error("contract", m) {}
};

struct LoadError : Error {
    explicit LoadError(const std::string& m) : Error("load", m) {}
};

struct IoError : Error {
    explicit IoError(const std::string& m) : Error("io", m) {}
};

}  // namespace cmcss
