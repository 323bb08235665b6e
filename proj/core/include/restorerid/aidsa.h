#pragma once

#include <functional>
#include <string>
#include <vector>

#include "restorerid/idenc.h"
#include "restorerid/image.h"

namespace rid {

struct AidsaConfig {
  double alpha = 9.5;
  double beta = 10.0;
  double clamp_lo = 0.0, clamp_hi = 2.0;

  void validate() const;
  void save(const std::string& path) const;
  static AidsaConfig load(const std::string& path);
};

// No-reference quality proxy in [0,100]: affine-calibrated log Laplacian
// energy minus a blockiness penalty. Constant images score 0.
double quality_score(const Image& img);

// λ = clamp(exp((α − quality)/β), lo, hi)
double id_scale(double quality, const AidsaConfig& cfg = {});

// λ grid {0, 0.04, ..., 2.00}
std::vector<double> default_lambdas();
// quality bucket edges {0, 30, 55, 100}
std::vector<double> default_bucket_edges();

struct SweepBucket {
  double lo = 0, hi = 0;
  int n = 0;
  std::vector<double> mean_id_sim;  // one per lambda
};

struct SweepResult {
  std::vector<double> lambdas;
  std::vector<SweepBucket> buckets;  // empty buckets omitted
  std::vector<std::string> warnings;

  double argmax_lambda(size_t bucket) const;
  void save_csv(const std::string& path) const;
  static SweepResult load_csv(const std::string& path);
};

struct SweepItem {
  Image gt, lq, ref;
};

// restore(lq, ref, lambda, seed) -> restored image
using SweepRestorer =
    std::function<Image(const Image&, const Image&, double, uint64_t)>;

SweepResult sweep(const SweepRestorer& restore, IdEncoder& idenc,
                  const std::vector<SweepItem>& items,
                  const std::vector<double>& lambdas,
                  const std::vector<double>& bucket_edges, uint64_t seed);

// grid-search (α, β) so the id_scale curve tracks each bucket's argmax λ at
// the bucket center; ties break toward smaller α, then smaller β
AidsaConfig calibrate(const SweepResult& sr, const std::vector<double>& alpha_grid,
                      const std::vector<double>& beta_grid);

}  // namespace rid
