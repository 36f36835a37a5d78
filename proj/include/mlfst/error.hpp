#pragma once

#include <stdexcept>
#include <string>

namespace mlfst {

enum class Errc {
  missing_column,
  unparseable_row,
  empty_file,
  zero_norm_quaternion,
  series_too_short,
  no_usable_flights,
  empty_training_set,
  degenerate_split,
  shape_mismatch,
  stale_cache,
  infer_before_train,
  non_finite_activation,
  empty_dataset,
  non_finite_loss,
  corrupt_checkpoint,
  io_failure,
  checkpoint_mismatch,
  empty_input,
  degenerate_input,
  config_invalid,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::missing_column: return "MissingColumn";
    case Errc::unparseable_row: return "UnparseableRow";
    case Errc::empty_file: return "EmptyFile";
    case Errc::zero_norm_quaternion: return "ZeroNormQuaternion";
    case Errc::series_too_short: return "SeriesTooShort";
    case Errc::no_usable_flights: return "NoUsableFlights";
    case Errc::empty_training_set: return "EmptyTrainingSet";
    case Errc::degenerate_split: return "DegenerateSplit";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::stale_cache: return "StaleCache";
    case Errc::infer_before_train: return "InferBeforeTrain";
    case Errc::non_finite_activation: return "NonFiniteActivation";
    case Errc::empty_dataset: return "EmptyDataset";
    case Errc::non_finite_loss: return "NonFiniteLoss";
    case Errc::corrupt_checkpoint: return "CorruptCheckpoint";
    case Errc::io_failure: return "IoFailure";
    case Errc::checkpoint_mismatch: return "CheckpointMismatch";
    case Errc::empty_input: return "EmptyInput";
    case Errc::degenerate_input: return "DegenerateInput";
    case Errc::config_invalid: return "ConfigInvalid";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code), message_(msg) {}

  Errc code() const noexcept { return code_; }
  // Bare description without the errc name prefix that what() carries.
  const std::string& message() const noexcept { return message_; }

 private:
  Errc code_;
  std::string message_;
};

[[noreturn]] inline void raise(Errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, Errc code, const std::string& msg) {
  if (!cond) raise(code, msg);
}

}  // namespace mlfst
