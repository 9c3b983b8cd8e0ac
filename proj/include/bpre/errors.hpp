#pragma once

#include <stdexcept>
#include <string>

namespace bpre {

enum class errc {
  non_zero_p0,
  not_normalized,
  negative_mass,
  support_too_large,
  invalid_weight,
  not_supercritical,
  invalid_env,
  no_convergence,
  truncation_exceeded,
  enumeration_too_large,
  divergent_series,
  precondition_violated,
  degenerate_tilt,
  degenerate_sigma,
  hypothesis_violated,
  schema_error,
  unknown_study,
  io_error,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::non_zero_p0: return "NonZeroP0";
    case errc::not_normalized: return "NotNormalized";
    case errc::negative_mass: return "NegativeMass";
    case errc::support_too_large: return "SupportTooLarge";
    case errc::invalid_weight: return "InvalidWeight";
    case errc::not_supercritical: return "NotSupercritical";
    case errc::invalid_env: return "InvalidEnv";
    case errc::no_convergence: return "NoConvergence";
    case errc::truncation_exceeded: return "TruncationExceeded";
    case errc::enumeration_too_large: return "EnumerationTooLarge";
    case errc::divergent_series: return "DivergentSeries";
    case errc::precondition_violated: return "PreconditionViolated";
    case errc::degenerate_tilt: return "DegenerateTilt";
    case errc::degenerate_sigma: return "DegenerateSigma";
    case errc::hypothesis_violated: return "HypothesisViolated";
    case errc::schema_error: return "SchemaError";
    case errc::unknown_study: return "UnknownStudy";
    case errc::io_error: return "IoError";
  }
  return "Error";
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  errc code() const { return code_; }

 private:
  errc code_;
};

// Schema violations carry the JSON-pointer path of the offending node.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& pointer, const std::string& what)
      : Error(errc::schema_error, "at " + pointer + ": " + what), pointer_(pointer) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

}  // namespace bpre
