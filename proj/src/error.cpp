#include "citeworthy/error.hpp"

namespace citeworthy {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::EmptyDocument: return "EmptyDocument";
        case ErrorCode::NoAbstract: return "NoAbstract";
        case ErrorCode::NoSentences: return "NoSentences";
        case ErrorCode::AllDocumentsSkipped: return "AllDocumentsSkipped";
        case ErrorCode::BadPatternConfig: return "BadPatternConfig";
        case ErrorCode::InsufficientDocuments: return "InsufficientDocuments";
        case ErrorCode::BadRatios: return "BadRatios";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::BadWindowLength: return "BadWindowLength";
        case ErrorCode::EmptyCorpus: return "EmptyCorpus";
        case ErrorCode::SchemaMismatch: return "SchemaMismatch";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::UnknownTokenId: return "UnknownTokenId";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::NonFiniteInput: return "NonFiniteInput";
        case ErrorCode::GraphMismatch: return "GraphMismatch";
        case ErrorCode::EmptySplit: return "EmptySplit";
        case ErrorCode::DivergenceDetected: return "DivergenceDetected";
        case ErrorCode::IncompatibleCheckpoint: return "IncompatibleCheckpoint";
        case ErrorCode::FormatVersionMismatch: return "FormatVersionMismatch";
        case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
        case ErrorCode::MissingVector: return "MissingVector";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::EmptyInput: return "EmptyInput";
    }
    return "UnknownError";
}

}  // namespace citeworthy
