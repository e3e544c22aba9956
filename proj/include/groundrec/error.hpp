// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace groundrec
{

/// Base class for every error raised by the library.
class Error: public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// Caller violated a documented precondition (bad flag, bad config value).
class UsageError: public Error
{
  public:
    using Error::Error;
};

/// Input data is malformed or inconsistent.
class DataError: public Error
{
  public:
    using Error::Error;
};

/// A remote service failed after the configured number of attempts.
class RemoteError: public Error
{
  public:
    RemoteError(std::string const& message, int attempts):
        Error(message + " (after " + std::to_string(attempts) + " attempt(s))"), _attempts(attempts)
    {
    }

    [[nodiscard]] auto attempts() const noexcept -> int { return _attempts; }

  private:
    int _attempts;
};

/// Raised by batch operations; lists every failing element.
class BatchError: public Error
{
  public:
    BatchError(std::string const& message, std::vector<std::size_t> failed):
        Error(message + " (failed indices: " + join(failed) + ")"), _failed(std::move(failed))
    {
    }

    [[nodiscard]] auto failed_indices() const noexcept -> std::vector<std::size_t> const& { return _failed; }

  private:
    static auto join(std::vector<std::size_t> const& values) -> std::string
    {
        auto out = std::string {};
        for (auto i = std::size_t { 0 }; i < values.size(); ++i)
        {
            if (i > 0)
                out += ",";
            out += std::to_string(values[i]);
        }
        return out;
    }

    std::vector<std::size_t> _failed;
};

} // namespace groundrec
