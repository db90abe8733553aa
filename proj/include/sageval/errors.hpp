#pragma once

#include <stdexcept>
#include <string>

namespace sageval {

/// Base of every error the library raises. `kind()` is the stable taxonomy
/// name (e.g. "OutOfRangeScore") used by tests and by run manifests.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define SAGEVAL_DEFINE_ERROR(Name)                                        \
    class Name : public Error {                                           \
    public:                                                               \
        explicit Name(const std::string& message) : Error(#Name, message) {} \
    };

// form_model
class SchemaError : public Error {
public:
    SchemaError(std::string path, std::string reason)
        : Error("SchemaError", path + ": " + reason), path_(std::move(path)), reason_(std::move(reason)) {}
    const std::string& path() const noexcept { return path_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::string path_;
    std::string reason_;
};
SAGEVAL_DEFINE_ERROR(InvariantError)

// aspect_registry
SAGEVAL_DEFINE_ERROR(UnknownAspect)
SAGEVAL_DEFINE_ERROR(NoOpRevision)
SAGEVAL_DEFINE_ERROR(DuplicateAspect)

// llm_gateway
SAGEVAL_DEFINE_ERROR(TransportError)
SAGEVAL_DEFINE_ERROR(AuthError)
SAGEVAL_DEFINE_ERROR(MalformedResponse)
SAGEVAL_DEFINE_ERROR(MissingFixture)
SAGEVAL_DEFINE_ERROR(InvalidRequest)

class RemoteError : public Error {
public:
    RemoteError(int status, std::string body)
        : Error("RemoteError", "remote returned HTTP " + std::to_string(status) + ": " + body),
          status_(status), body_(std::move(body)) {}
    int status() const noexcept { return status_; }
    const std::string& body() const noexcept { return body_; }

private:
    int status_;
    std::string body_;
};

// evaluator_agent
SAGEVAL_DEFINE_ERROR(UnparseableResponse)
SAGEVAL_DEFINE_ERROR(EmptySamples)
SAGEVAL_DEFINE_ERROR(NoScoreTokensFound)

class OutOfRangeScore : public Error {
public:
    explicit OutOfRangeScore(long long value)
        : Error("OutOfRangeScore", "score " + std::to_string(value) + " is outside 1..5"), value_(value) {}
    long long value() const noexcept { return value_; }

private:
    long long value_;
};

// sage_agent
SAGEVAL_DEFINE_ERROR(PartialFirstPass)
SAGEVAL_DEFINE_ERROR(UnparseableVerdict)
SAGEVAL_DEFINE_ERROR(UnknownAspectInVerdict)
SAGEVAL_DEFINE_ERROR(TooManySuggestions)
SAGEVAL_DEFINE_ERROR(FormMismatch)

// analytics
SAGEVAL_DEFINE_ERROR(DuplicateForm)
SAGEVAL_DEFINE_ERROR(LengthMismatch)
SAGEVAL_DEFINE_ERROR(DegenerateInput)
SAGEVAL_DEFINE_ERROR(MissingAnnotation)
SAGEVAL_DEFINE_ERROR(FormSetMismatch)
SAGEVAL_DEFINE_ERROR(AnnotationError)

// pipeline_cli
SAGEVAL_DEFINE_ERROR(ConfigError)
SAGEVAL_DEFINE_ERROR(EmptyRun)
SAGEVAL_DEFINE_ERROR(IoError)

#undef SAGEVAL_DEFINE_ERROR

}  // namespace sageval
