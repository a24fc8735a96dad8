#pragma once

#include <stdexcept>
#include <string>

namespace nvbleed {

using TimeNs = long long;
using GpuId = int;
using ProcessId = int;
using VmId = int;

enum class ErrorCode {
    InvalidArgument,
    NotFound,
    Unavailable,   // counters disabled, protocol cannot run
    Unreachable,   // calibration target outside search bounds
    Timeout,       // handshake never completed
    Inseparable,   // threshold calibration failed
    Io,
};

/// Single exception type for the library; the code drives CLI exit status.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, const std::string& what) {
    if (!cond) fail(ErrorCode::InvalidArgument, what);
}

}  // namespace nvbleed
