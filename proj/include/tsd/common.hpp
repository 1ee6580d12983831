// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace tsd {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorKind { Config = 2, Data = 3, Divergence = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const { return kind_; }
    int exit_code() const { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void config_error(const std::string& msg) {
    throw Error(ErrorKind::Config, msg);
}
[[noreturn]] inline void data_error(const std::string& msg) {
    throw Error(ErrorKind::Data, msg);
}
[[noreturn]] inline void divergence_error(const std::string& msg) {
    throw Error(ErrorKind::Divergence, msg);
}

inline constexpr const char* kVersionString = "tsdkit-0.1.0";

} // namespace tsd
