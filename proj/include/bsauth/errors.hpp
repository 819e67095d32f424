#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bsauth {

// Base for every domain failure raised by the library. The CLI maps these to
// exit code 1; IoError maps to exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class UnreachableTarget : public Error {
public:
    using Error::Error;
};

class OddChipCount : public Error {
public:
    explicit OddChipCount(std::size_t count)
        : Error("odd chip count: " + std::to_string(count)), count_(count) {}
    std::size_t count() const noexcept { return count_; }

private:
    std::size_t count_;
};

// Raised when a chip pair has no mid-bit transition. index is the bit index.
class InvalidChipPair : public Error {
public:
    explicit InvalidChipPair(std::size_t index)
        : Error("invalid chip pair at bit " + std::to_string(index)), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

class NoHarvest : public Error {
public:
    NoHarvest() : Error("harvested dc power is not positive; node never wakes") {}
};

class NoFrame : public Error {
public:
    NoFrame() : Error("no backscatter frame found in trace") {}
};

class TraceTooShort : public Error {
public:
    using Error::Error;
};

class DegenerateLevels : public Error {
public:
    using Error::Error;
};

class InsufficientOversampling : public Error {
public:
    using Error::Error;
};

class ChannelOutOfRange : public Error {
public:
    ChannelOutOfRange(std::string node_id, int channel, int channels)
        : Error("node '" + node_id + "' uses channel " + std::to_string(channel) +
                " but only " + std::to_string(channels) + " channel(s) exist") {}
};

class ConfigError : public Error {
public:
    ConfigError(std::string path, std::string constraint)
        : Error(path + ": " + constraint), path_(std::move(path)), constraint_(std::move(constraint)) {}
    const std::string& path() const noexcept { return path_; }
    const std::string& constraint() const noexcept { return constraint_; }

private:
    std::string path_;
    std::string constraint_;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, std::size_t position, const std::string& what)
        : Error("parse error at line " + std::to_string(line) + ", position " +
                std::to_string(position) + ": " + what),
          line_(line), position_(position) {}
    std::size_t line() const noexcept { return line_; }
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t line_;
    std::size_t position_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace bsauth
