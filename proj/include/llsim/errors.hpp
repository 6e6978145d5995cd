#pragma once

#include <stdexcept>
#include <string>

namespace llsim {

/// Base class for all toolkit errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Generator configuration outside documented ranges.
struct ConfigError : Error {
    using Error::Error;
};

/// Message violates the framing rules (terminator misplaced, bad length).
struct MalformedMessage : Error {
    using Error::Error;
};

/// Observation has zero probability under every intention.
struct DegenerateEvidence : Error {
    using Error::Error;
};

/// Symbol history is not a valid prefix of the symbol stream.
struct InvalidPrefix : Error {
    using Error::Error;
};

/// Training or evaluation corpus contains no symbols.
struct EmptyCorpus : Error {
    using Error::Error;
};

/// Evaluation data does not match the spec's alphabet or framing.
struct SpecMismatch : Error {
    using Error::Error;
};

/// Serialized file is not in the expected format.
struct FormatError : Error {
    using Error::Error;
};

/// Serialized file has an unsupported version tag.
struct VersionError : Error {
    using Error::Error;
};

/// Requested intention path has zero probability under the prior chain.
struct ZeroProbabilityPath : Error {
    using Error::Error;
};

/// Exact enumeration requested beyond the configured horizon cap.
struct HorizonTooLarge : Error {
    using Error::Error;
};

/// Input data file could not be parsed; carries a 1-based line number.
struct DataError : Error {
    DataError(const std::string& what, long line) : Error(what), line_number(line) {}
    long line_number{0};
};

}  // namespace llsim
