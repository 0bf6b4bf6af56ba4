#pragma once

#include <stdexcept>
#include <string>

namespace umt {

// Every failure carries a short class name so the CLI can print one
// machine-parsable line: "error: <kind>: <message>".
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

inline Error dimension_error(const std::string& msg) { return Error("DimensionError", msg); }
inline Error numeric_error(const std::string& msg) { return Error("NumericError", msg); }
inline Error io_error(const std::string& msg) { return Error("IoError", msg); }
inline Error parse_error(const std::string& msg) { return Error("ParseError", msg); }
inline Error config_error(const std::string& msg) { return Error("ConfigError", msg); }
inline Error data_error(const std::string& msg) { return Error("DataError", msg); }

}  // namespace umt
