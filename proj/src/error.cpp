#include "scenecond/error.hpp"

namespace scenecond {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MissingKey: return "MissingKey";
        case ErrorCode::TypeMismatch: return "TypeMismatch";
        case ErrorCode::NoJsonFound: return "NoJsonFound";
        case ErrorCode::InvalidPlan: return "InvalidPlan";
        case ErrorCode::UnknownEntity: return "UnknownEntity";
        case ErrorCode::InvalidCamera: return "InvalidCamera";
        case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
        case ErrorCode::InvalidRange: return "InvalidRange";
        case ErrorCode::IndivisibleDims: return "IndivisibleDims";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::EmptySelection: return "EmptySelection";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::PortFailure: return "PortFailure";
        case ErrorCode::NoVerdictFound: return "NoVerdictFound";
        case ErrorCode::MalformedLayout: return "MalformedLayout";
        case ErrorCode::UnknownRelation: return "UnknownRelation";
        case ErrorCode::ExhaustedCombinations: return "ExhaustedCombinations";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

}  // namespace scenecond
