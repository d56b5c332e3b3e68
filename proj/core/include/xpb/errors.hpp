#pragma once

#include <stdexcept>
#include <string>

namespace xpb {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// corpus
struct DuplicateToken : Error { using Error::Error; };
struct EmptyVocabulary : Error { using Error::Error; };
struct UnknownToken : Error { using Error::Error; };
struct SchemaError : Error { using Error::Error; };
struct DegenerateDataset : Error { using Error::Error; };
struct DimensionError : Error { using Error::Error; };

class ParseError : public Error {
public:
    ParseError(const std::string& what, long line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    long line() const { return line_; }

private:
    long line_;
};

// synthgen
struct UnknownPathway : Error { using Error::Error; };
struct GenerationStalled : Error { using Error::Error; };

// recurrent
struct EmptySequence : Error { using Error::Error; };
struct ModelError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };

// attrib
struct EvaluationError : Error { using Error::Error; };
struct DegenerateInstance : Error { using Error::Error; };
struct TooManyUnits : Error { using Error::Error; };
struct NoAttention : Error { using Error::Error; };

// evalx
struct UndefinedMetric : Error { using Error::Error; };

class MissingAttribution : public Error {
public:
    explicit MissingAttribution(long long id)
        : Error("missing attribution for observation " + std::to_string(id)), id_(id) {}
    long long id() const { return id_; }

private:
    long long id_;
};

// harness
struct ConfigError : Error { using Error::Error; };
struct MissingArtifact : Error { using Error::Error; };
struct IncompatibleMethod : Error { using Error::Error; };

}  // namespace xpb
