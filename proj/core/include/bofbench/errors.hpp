#pragma once

#include <stdexcept>
#include <string>

namespace bof {

// Error taxonomy mapped to CLI exit codes: usage 1, data 2, pipeline 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad flags, inconsistent configuration.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Bad input files: audio, manifests, serialized artifacts.
class DataError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage failed; carries stage and item context in the message.
class PipelineError : public Error {
 public:
  using Error::Error;
};

// Audio decode failures, each reported distinctly.
class UnreadableFileError : public DataError {
 public:
  using DataError::DataError;
};

class UnsupportedEncodingError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyAudioError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace bof
