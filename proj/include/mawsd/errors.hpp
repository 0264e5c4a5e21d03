#ifndef MAWSD_ERRORS_HPP
#define MAWSD_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mawsd {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape or dimension disagreement between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Invalid architecture, fusion or training configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Token index outside a vocabulary.
class VocabularyError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf encountered in values or gradients.
class NumericError : public Error {
public:
    using Error::Error;
};

/// API misuse (non-scalar backward, empty batch, all-masked loss, ...).
class UsageError : public Error {
public:
    using Error::Error;
};

/// Malformed input file: corpus, vocabulary, checkpoint.
class DataError : public Error {
public:
    using Error::Error;
};

} // namespace mawsd

#endif // MAWSD_ERRORS_HPP
