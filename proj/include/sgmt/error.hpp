#pragma once

#include <stdexcept>
#include <string>

namespace sgmt {

// Categories map onto the CLI exit codes (2 config, 3 data, 4 numeric).
enum class ErrorKind { config, data, numeric };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline Error config_error(const std::string& what) { return Error(ErrorKind::config, what); }
inline Error data_error(const std::string& what) { return Error(ErrorKind::data, what); }
inline Error numeric_error(const std::string& what) { return Error(ErrorKind::numeric, what); }

} // namespace sgmt
