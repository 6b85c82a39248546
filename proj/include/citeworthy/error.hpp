#pragma once

#include <stdexcept>
#include <string>

namespace citeworthy {

enum class ErrorCode {
    // corpus
    EmptyDocument,
    NoAbstract,
    NoSentences,
    AllDocumentsSkipped,
    BadPatternConfig,
    // dataset
    InsufficientDocuments,
    BadRatios,
    IndexOutOfRange,
    BadWindowLength,
    EmptyCorpus,
    SchemaMismatch,
    IoFailure,
    // nn
    UnknownTokenId,
    ShapeMismatch,
    NonFiniteInput,
    GraphMismatch,
    // models
    EmptySplit,
    DivergenceDetected,
    IncompatibleCheckpoint,
    FormatVersionMismatch,
    CorruptCheckpoint,
    MissingVector,
    // eval
    LengthMismatch,
    EmptyInput,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

}  // namespace citeworthy
