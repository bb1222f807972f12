#pragma once

#include <stdexcept>
#include <string>

namespace sesm {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// audio ingestion
struct MalformedWav : Error { using Error::Error; };
struct UnsupportedFormat : Error { using Error::Error; };
struct ManifestError : Error { using Error::Error; };
struct InconsistentDialog : Error { using Error::Error; };

// configuration / shape
struct BadConfig : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };

// training
struct SingleClass : Error { using Error::Error; };
struct NonFinite : Error { using Error::Error; };
struct MissingBranchData : Error { using Error::Error; };

// persistence
struct SerializationError : Error { using Error::Error; };
struct VersionMismatch : Error { using Error::Error; };
struct CorruptFile : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

// evaluation harness
struct DegenerateSplit : Error { using Error::Error; };
struct UnknownDescriptor : Error { using Error::Error; };
struct EmptyFeature : Error { using Error::Error; };

} // namespace sesm
