#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gaussmap {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised by loaders; carries the 1-based line (text formats) or byte offset
// (binary formats) where parsing stopped. Zero means "not applicable".
class ParseError : public Error {
public:
    ParseError(const std::string &source, std::size_t line, std::size_t offset,
               const std::string &what)
        : Error(format(source, line, offset, what)), line_(line), offset_(offset) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t offset() const noexcept { return offset_; }

private:
    static std::string format(const std::string &source, std::size_t line,
                              std::size_t offset, const std::string &what) {
        std::string msg = source;
        if (line > 0) msg += ":" + std::to_string(line);
        if (offset > 0) msg += " (byte " + std::to_string(offset) + ")";
        return msg + ": " + what;
    }

    std::size_t line_;
    std::size_t offset_;
};

} // namespace gaussmap
