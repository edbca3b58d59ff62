#pragma once

#include <string>
#include <vector>

#include "t2g/mat.hpp"
#include "t2g/pretrain.hpp"
#include "t2g/reg.hpp"

namespace t2g {

// Block connectivity estimated per forward relation: p[k] is the
// n'_src x n'_dst density matrix for relation id 2k, tau[k] its edge
// admission threshold.
struct SbmModel {
  std::vector<RelationType> relations;  // shared with the source graph
  std::vector<Mat> p;
  std::vector<double> tau;
  double rho = 0.0;
};

// Thresholded cluster graph. Relation ids and ordering match the source
// entity graph, so parameters trained on one apply to the other.
struct SyntheticStructure {
  Reg graph;
  std::vector<double> density;  // realized, per forward relation
  std::vector<std::string> warnings;
};

// p[k](a,b) = edges between cluster a of the source table and cluster b of
// the destination table, over |a|*|b| possible pairs. Empty pairs give 0.
SbmModel estimate_connectivity(const Reg& reg, const PseudoLabels& pseudo);

// Nearest-rank (1-rho)-quantile over every entry of p, zeros included.
double threshold_relation(const Mat& p, double rho);

// Keeps entries strictly above tau; a relation losing all its entries keeps
// the single largest one instead. Inverse relations are exact transposes.
SyntheticStructure generate_structure(const SbmModel& model,
                                      const std::vector<int>& counts);

// estimate + threshold + generate in one step.
SyntheticStructure build_structure(const Reg& reg, const PseudoLabels& pseudo,
                                   double rho);

}  // namespace t2g
