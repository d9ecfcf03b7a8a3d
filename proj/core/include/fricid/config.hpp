#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fricid/harness.hpp"

namespace fricid {

/// Fully resolved experiment description: model + scenario + identifier
/// parameters, sweep/bench settings and output location. Missing keys take
/// the defaults below; unknown keys are rejected at parse time.
struct ExperimentConfig {
  ScenarioConfig scenario;
  IdentifierConfig identifier;
  double mu0 = 0.8;
  bool reset_enabled = true;

  std::vector<double> sweep_initials;  // empty: 0.05..1.0 step 0.05
  std::vector<double> sweep_rhos{1e-6, 0.05, 10.0};

  int bench_trials = 7;
  std::vector<GradientMethod> bench_methods{
      GradientMethod::Nonsmooth, GradientMethod::Smoothed,
      GradientMethod::RandZeroth, GradientMethod::RandFirst};

  std::string out_dir = "out";
  std::string stream_csv;  // identify from a recorded stream when set
};

/// Parses the nested key-value config format:
///   [section]
///   key = value            # comment
/// Sections: model, scenario, identifier, sweep, bench, output. Repeated
/// `segment = t0 t1 mu` lines build the terrain schedule. Errors carry the
/// line number and offending key.
ExperimentConfig parse_experiment_config_text(const std::string& text);
ExperimentConfig parse_experiment_config(const std::string& path);

/// Canonical echo of every resolved parameter; written next to outputs for
/// provenance and hashed into every output file.
std::string echo_config(const ExperimentConfig& config);
std::uint64_t config_hash(const ExperimentConfig& config);

}  // namespace fricid
