// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mixmt {

// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not fit the operation; the message names the op.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A NaN or Inf appeared during a forward or backward pass.
class NumericError : public Error {
 public:
  using Error::Error;
};

// API called in the wrong order (e.g. backward before forward).
class UsageError : public Error {
 public:
  using Error::Error;
};

// A documented precondition on an argument does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or specification.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Token id outside the vocabulary.
class VocabError : public Error {
 public:
  using Error::Error;
};

// Latent index outside [0, K).
class LatentIndexError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (files, corpora, instances).
class InputError : public Error {
 public:
  using Error::Error;
};

}  // namespace mixmt
