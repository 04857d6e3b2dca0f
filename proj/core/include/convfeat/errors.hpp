#pragma once

#include <stdexcept>

namespace convfeat {

// Base class for every error thrown by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeMismatch : Error { using Error::Error; };
struct ShapePlanError : Error { using Error::Error; };
struct NonFiniteActivation : Error { using Error::Error; };
struct LabelOutOfRange : Error { using Error::Error; };
struct LayerOutOfRange : Error { using Error::Error; };
struct FeatureOutOfRange : Error { using Error::Error; };
struct DivergenceDetected : Error { using Error::Error; };
struct EmptyEnsemble : Error { using Error::Error; };
struct MissingCheckpoint : Error { using Error::Error; };

struct IoError : Error { using Error::Error; };
struct FormatError : Error { using Error::Error; };

struct EmptyClass : Error { using Error::Error; };
struct UnreadableImage : Error { using Error::Error; };
struct BadParam : Error { using Error::Error; };

struct SingleClassData : Error { using Error::Error; };
struct EmptyClassInSplit : Error { using Error::Error; };
struct MissingClass : Error { using Error::Error; };
struct BadSubset : Error { using Error::Error; };

}  // namespace convfeat
