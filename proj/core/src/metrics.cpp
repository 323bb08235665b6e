#include "restorerid/metrics.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "restorerid/aidsa.h"
#include "restorerid/errors.h"
#include "restorerid/rng.h"

namespace rid {

double psnr(const Image& a, const Image& b) {
  if (!a.same_size(b)) throw ValidationError("psnr: shape mismatch");
  double mse = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    double d = static_cast<double>(a.data[i]) - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse <= 0.0) return 100.0;
  return std::min(100.0, -10.0 * std::log10(mse));
}

namespace {

constexpr int kWin = 11;
constexpr double kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;

std::vector<double> ssim_kernel() {
  std::vector<double> k(kWin);
  const double sigma = 1.5;
  double sum = 0;
  for (int i = 0; i < kWin; ++i) {
    double x = i - (kWin - 1) / 2.0;
    k[static_cast<size_t>(i)] = std::exp(-x * x / (2 * sigma * sigma));
    sum += k[static_cast<size_t>(i)];
  }
  for (double& v : k) v /= sum;
  return k;
}

// separable valid-mode gaussian filtering of a single channel
std::vector<double> gfilter(const std::vector<double>& img, int h, int w,
                            const std::vector<double>& k, int& oh, int& ow) {
  const int r = kWin - 1;
  ow = w - r;
  oh = h - r;
  std::vector<double> tmp(static_cast<size_t>(h) * ow, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < kWin; ++i) s += k[static_cast<size_t>(i)] * img[static_cast<size_t>(y) * w + x + i];
      tmp[static_cast<size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < kWin; ++i) s += k[static_cast<size_t>(i)] * tmp[static_cast<size_t>(y + i) * ow + x];
      out[static_cast<size_t>(y) * ow + x] = s;
    }
  return out;
}

double ssim_channel(const std::vector<double>& a, const std::vector<double>& b, int h,
                    int w) {
  static const std::vector<double> k = ssim_kernel();
  const size_t n = a.size();
  std::vector<double> aa(n), bb(n), ab(n);
  for (size_t i = 0; i < n; ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  int oh = 0, ow = 0;
  std::vector<double> ua = gfilter(a, h, w, k, oh, ow);
  std::vector<double> ub = gfilter(b, h, w, k, oh, ow);
  std::vector<double> uaa = gfilter(aa, h, w, k, oh, ow);
  std::vector<double> ubb = gfilter(bb, h, w, k, oh, ow);
  std::vector<double> uab = gfilter(ab, h, w, k, oh, ow);
  double acc = 0.0;
  for (size_t i = 0; i < ua.size(); ++i) {
    double va = uaa[i] - ua[i] * ua[i];
    double vb = ubb[i] - ub[i] * ub[i];
    double vab = uab[i] - ua[i] * ub[i];
    acc += ((2 * ua[i] * ub[i] + kC1) * (2 * vab + kC2)) /
           ((ua[i] * ua[i] + ub[i] * ub[i] + kC1) * (va + vb + kC2));
  }
  return acc / static_cast<double>(ua.size());
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  if (!a.same_size(b)) throw ValidationError("ssim: shape mismatch");
  if (a.h < kWin || a.w < kWin) throw ValidationError("ssim: image smaller than window");
  double acc = 0.0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> ca(static_cast<size_t>(a.h) * a.w), cb(ca.size());
    for (int y = 0; y < a.h; ++y)
      for (int x = 0; x < a.w; ++x) {
        ca[static_cast<size_t>(y) * a.w + x] = a.at(y, x, c);
        cb[static_cast<size_t>(y) * a.w + x] = b.at(y, x, c);
      }
    acc += ssim_channel(ca, cb, a.h, a.w);
  }
  return acc / 3.0;
}

namespace {

// regularized incomplete beta I_x(a,b), Lentz continued fraction
double betacf(double a, double b, double x) {
  const double eps = 3e-14, fpmin = 1e-300;
  double qab = a + b, qap = a + 1, qam = a - 1;
  double c = 1, d = 1 - qab * x / qap;
  if (std::abs(d) < fpmin) d = fpmin;
  d = 1 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

double betainc(double a, double b, double x) {
  if (x <= 0) return 0;
  if (x >= 1) return 1;
  double ln = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
              b * std::log(1 - x);
  double front = std::exp(ln);
  if (x < (a + 1) / (a + b + 2)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1 - x) / b;
}

}  // namespace

double paired_ttest_p(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw ValidationError("paired_ttest_p: need matched samples, n >= 2");
  const size_t n = a.size();
  double mean = 0;
  for (size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double var = 0;
  for (size_t i = 0; i < n; ++i) {
    double d = a[i] - b[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(n - 1);
  if (var <= 0) return mean == 0 ? 1.0 : 0.0;
  double t = mean / std::sqrt(var / static_cast<double>(n));
  double df = static_cast<double>(n - 1);
  return betainc(df / 2.0, 0.5, df / (df + t * t));
}

void MetricReport::finalize() {
  auto mean = [](const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  psnr_mean = mean(psnr_v);
  ssim_mean = mean(ssim_v);
  id_sim_mean = mean(id_sim_v);
  quality_mean = mean(quality_v);
}

void MetricReport::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& [k, v] : provenance) out << "# " << k << "=" << v << "\n";
  out << "index,psnr,ssim,id_sim,quality_proxy\n";
  for (size_t i = 0; i < psnr_v.size(); ++i)
    out << i << "," << psnr_v[i] << "," << ssim_v[i] << "," << id_sim_v[i] << ","
        << quality_v[i] << "\n";
  out << "mean," << psnr_mean << "," << ssim_mean << "," << id_sim_mean << ","
      << quality_mean << "\n";
}

MetricReport evaluate(const Restorer& restore, IdEncoder& idenc,
                      const std::vector<EvalItem>& items, const SeverityPreset& severity,
                      uint64_t seed) {
  MetricReport rep;
  for (size_t i = 0; i < items.size(); ++i) {
    const EvalItem& it = items[i];
    DegradationRecipe recipe = sample_recipe(severity, derive_seed(seed, i));
    Image lq = degrade(it.gt, recipe);
    Image out = restore(lq, it.ref, derive_seed(seed, i + 100000));
    rep.psnr_v.push_back(psnr(out, it.gt));
    rep.ssim_v.push_back(ssim(out, it.gt));
    rep.id_sim_v.push_back(id_similarity(embed(idenc, out), embed(idenc, it.gt)));
    rep.quality_v.push_back(quality_score(out));
  }
  rep.provenance["severity"] = severity.name;
  rep.provenance["seed"] = std::to_string(seed);
  rep.provenance["n"] = std::to_string(items.size());
  rep.finalize();
  return rep;
}

std::vector<AblationRow> run_ablation(
    const std::vector<std::pair<std::string, std::optional<Restorer>>>& variants,
    IdEncoder& idenc, const std::vector<EvalItem>& items, uint64_t seed) {
  std::vector<AblationRow> rows;
  for (const auto& [name, restorer] : variants) {
    for (const SeverityPreset& sev : {SeverityPreset::light(), SeverityPreset::heavy()}) {
      AblationRow row;
      row.variant = name;
      row.severity = sev.name;
      if (restorer) {
        MetricReport rep = evaluate(*restorer, idenc, items, sev, seed);
        row.present = true;
        row.psnr = rep.psnr_mean;
        row.ssim = rep.ssim_mean;
        row.id_sim = rep.id_sim_mean;
        row.quality = rep.quality_mean;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

void save_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "variant,severity,present,psnr,ssim,id_sim,quality_proxy\n";
  for (const auto& r : rows) {
    out << r.variant << "," << r.severity << "," << (r.present ? 1 : 0) << ",";
    if (r.present)
      out << r.psnr << "," << r.ssim << "," << r.id_sim << "," << r.quality << "\n";
    else
      out << ",,,\n";
  }
}

}  // namespace rid
