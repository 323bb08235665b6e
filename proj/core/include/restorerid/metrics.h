#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "restorerid/degrade.h"
#include "restorerid/idenc.h"
#include "restorerid/image.h"

namespace rid {

// peak signal-to-noise ratio on [0,1] images; identical images cap at 100 dB
double psnr(const Image& a, const Image& b);

// standard SSIM: 11x11 Gaussian window (sigma 1.5), C1=0.01^2, C2=0.03^2,
// averaged over the three channels
double ssim(const Image& a, const Image& b);

// two-sided p-value of a paired t-test (H0: mean difference is zero)
double paired_ttest_p(const std::vector<double>& a, const std::vector<double>& b);

struct MetricReport {
  std::vector<double> psnr_v, ssim_v, id_sim_v, quality_v;
  double psnr_mean = 0, ssim_mean = 0, id_sim_mean = 0, quality_mean = 0;
  std::map<std::string, std::string> provenance;

  void finalize();  // recompute aggregates from per-image values
  void save_csv(const std::string& path) const;
};

struct EvalItem {
  Image gt, ref;
  int id_label = 0;
};

// restore(lq, ref, seed) -> restored image
using Restorer = std::function<Image(const Image&, const Image&, uint64_t)>;

// degrade each gt at `severity`, restore against its reference, score vs gt
MetricReport evaluate(const Restorer& restore, IdEncoder& idenc,
                      const std::vector<EvalItem>& items, const SeverityPreset& severity,
                      uint64_t seed);

struct AblationRow {
  std::string variant;
  std::string severity;
  bool present = false;
  double psnr = 0, ssim = 0, id_sim = 0, quality = 0;
};

// variants evaluated over both severities; missing variants (no restorer)
// are listed as absent and the run continues
std::vector<AblationRow> run_ablation(
    const std::vector<std::pair<std::string, std::optional<Restorer>>>& variants,
    IdEncoder& idenc, const std::vector<EvalItem>& items, uint64_t seed);

void save_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);

}  // namespace rid
