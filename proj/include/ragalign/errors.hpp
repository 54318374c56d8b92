#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ragalign {

/// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IngestError : public Error {
public:
    enum class Kind { duplicate_id, parse, io };

    IngestError(Kind kind, std::size_t line_no, const std::string& what)
        : Error(what), kind_(kind), line_no_(line_no) {}

    Kind kind() const noexcept { return kind_; }
    /// 1-based line of the offending record, 0 when not line-specific.
    std::size_t line_no() const noexcept { return line_no_; }

private:
    Kind kind_;
    std::size_t line_no_;
};

class ChunkError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    enum class Kind { empty, duplicate };
    IndexError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

class ProviderError : public Error {
public:
    ProviderError(const std::string& what, int status = 0, bool retryable = true)
        : Error(what), status_(status), retryable_(retryable) {}

    /// HTTP status of the last attempt; 0 for transport failures.
    int status() const noexcept { return status_; }
    bool retryable() const noexcept { return retryable_; }

private:
    int status_;
    bool retryable_;
};

class TemplateError : public Error {
public:
    explicit TemplateError(std::string name)
        : Error("missing template binding: " + name), name_(std::move(name)) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

class QAGenError : public Error {
public:
    enum class Kind { parse, empty_field };
    QAGenError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

class JudgeError : public Error {
public:
    using Error::Error;
};

class ConsolidateError : public Error {
public:
    using Error::Error;
};

class MetricError : public Error {
public:
    using Error::Error;
};

class RenderError : public Error {
public:
    using Error::Error;
};

class ComposerError : public Error {
public:
    using Error::Error;
};

class EmitError : public Error {
public:
    EmitError(std::size_t index, const std::string& what)
        : Error("record " + std::to_string(index) + ": " + what), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

class BuildError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class MockError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class StageError : public Error {
public:
    using Error::Error;
};

}  // namespace ragalign
