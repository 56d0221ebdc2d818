#pragma once

#include <string>
#include <vector>

#include "lipcmp/counter.hpp"
#include "lipcmp/layers.hpp"

namespace lipcmp {

struct CostModel {
  std::size_t b = 1;
  std::size_t s = 8;
  std::size_t c = 4;
  std::size_t k = 3;
  std::size_t t = 10;    // inner iterations (BCOP, LOT)
  std::size_t t1 = 5;    // SOC series terms
  std::size_t t2 = 100;  // SOC normalization power iterations

  double C() const { return double(b) * double(s * s) * double(c * c) * double(k * k); }
  double M() const { return double(b) * double(s * s) * double(c); }
  double P() const { return double(c * c) * double(k * k); }
  void validate() const;
};

enum class CostPhase { Train, Inference };

std::string to_string(CostPhase phase);
CostPhase parse_cost_phase(const std::string& name);

// Kinds with a cost formula.
const std::vector<LayerKind>& costed_kinds();

// Leading-term MACs and memory; inference drops the cached weight transform.
OpCount predicted_cost(LayerKind kind, const CostModel& model, CostPhase phase);

// Counts the work actually executed. Train: parameter transform plus forward.
// Inference: forward only, with the transform cached beforehand.
OpCount measured_cost(LayerKind kind, const CostModel& model, CostPhase phase);

struct CostRow {
  LayerKind kind = LayerKind::Standard;
  CostPhase phase = CostPhase::Train;
  CostModel model;
  OpCount predicted;
  OpCount measured;
};

CostRow cost_row(LayerKind kind, const CostModel& model, CostPhase phase);
std::string cost_csv_header();
std::string to_csv(const CostRow& row);

// Least-squares slope of log(y) against log(x).
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace lipcmp
