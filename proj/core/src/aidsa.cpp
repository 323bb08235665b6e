#include "restorerid/aidsa.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "restorerid/configfile.h"
#include "restorerid/errors.h"
#include "restorerid/rng.h"

namespace rid {

namespace {

// calibration of the proxy's [0,100] mapping, fitted once on the toy corpus
// (HQ ≈ 80, heavy-LQ ≈ 15) and frozen
constexpr double kSharpGain = 26.9;
constexpr double kSharpFloor = -4.79;   // log10 Laplacian energy scoring 0
constexpr double kBlockWeight = 290.0;  // penalty per unit boundary excess

double laplacian_energy(const std::vector<float>& l, int h, int w) {
  double acc = 0.0;
  int64_t n = 0;
  for (int y = 1; y + 1 < h; ++y)
    for (int x = 1; x + 1 < w; ++x) {
      double v = 4.0 * l[static_cast<size_t>(y) * w + x] - l[static_cast<size_t>(y) * w + x - 1] -
                 l[static_cast<size_t>(y) * w + x + 1] - l[static_cast<size_t>(y - 1) * w + x] -
                 l[static_cast<size_t>(y + 1) * w + x];
      acc += v * v;
      ++n;
    }
  return n > 0 ? acc / static_cast<double>(n) : 0.0;
}

// excess gradient magnitude on 8-aligned block boundaries vs elsewhere
double blockiness(const std::vector<float>& l, int h, int w) {
  double db = 0, dw = 0;
  int64_t nb = 0, nw = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 1; x < w; ++x) {
      double d = std::abs(l[static_cast<size_t>(y) * w + x] - l[static_cast<size_t>(y) * w + x - 1]);
      if (x % 8 == 0) { db += d; ++nb; } else { dw += d; ++nw; }
    }
  for (int y = 1; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double d = std::abs(l[static_cast<size_t>(y) * w + x] - l[static_cast<size_t>(y - 1) * w + x]);
      if (y % 8 == 0) { db += d; ++nb; } else { dw += d; ++nw; }
    }
  if (nb == 0 || nw == 0) return 0.0;
  return std::max(0.0, db / static_cast<double>(nb) - dw / static_cast<double>(nw));
}

}  // namespace

void AidsaConfig::validate() const {
  if (beta <= 0) throw ValidationError("aidsa: beta must be positive");
  if (clamp_lo > clamp_hi) throw ValidationError("aidsa: clamp range inverted");
}

void AidsaConfig::save(const std::string& path) const {
  std::map<std::string, std::string> kv;
  kv["alpha"] = std::to_string(alpha);
  kv["beta"] = std::to_string(beta);
  kv["clamp_lo"] = std::to_string(clamp_lo);
  kv["clamp_hi"] = std::to_string(clamp_hi);
  write_config(path, kv);
}

AidsaConfig AidsaConfig::load(const std::string& path) {
  auto kv = read_config(path);
  AidsaConfig c;
  c.alpha = std::stod(kv.at("alpha"));
  c.beta = std::stod(kv.at("beta"));
  c.clamp_lo = std::stod(kv.at("clamp_lo"));
  c.clamp_hi = std::stod(kv.at("clamp_hi"));
  c.validate();
  return c;
}

double quality_score(const Image& img) {
  if (img.h < 3 || img.w < 3) throw ValidationError("quality_score: image too small");
  std::vector<float> l = luma(img);
  double e = laplacian_energy(l, img.h, img.w);
  if (e < 1e-10) return 0.0;  // constant / featureless floor
  double score = kSharpGain * (std::log10(e) - kSharpFloor) -
                 kBlockWeight * blockiness(l, img.h, img.w);
  return std::clamp(score, 0.0, 100.0);
}

double id_scale(double quality, const AidsaConfig& cfg) {
  cfg.validate();
  return std::clamp(std::exp((cfg.alpha - quality) / cfg.beta), cfg.clamp_lo,
                    cfg.clamp_hi);
}

std::vector<double> default_lambdas() {
  std::vector<double> out;
  for (int i = 0; i <= 50; ++i) out.push_back(i * 0.04);
  return out;
}

std::vector<double> default_bucket_edges() { return {0.0, 30.0, 55.0, 100.0}; }

double SweepResult::argmax_lambda(size_t bucket) const {
  const auto& m = buckets.at(bucket).mean_id_sim;
  size_t best = 0;
  for (size_t i = 1; i < m.size(); ++i)
    if (m[i] > m[best]) best = i;
  return lambdas[best];
}

void SweepResult::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "bucket_lo,bucket_hi,n";
  for (double l : lambdas) out << ",lambda_" << l;
  out << "\n";
  for (const auto& b : buckets) {
    out << b.lo << "," << b.hi << "," << b.n;
    for (double v : b.mean_id_sim) out << "," << v;
    out << "\n";
  }
  for (const auto& w : warnings) out << "# " << w << "\n";
}

SweepResult SweepResult::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  SweepResult sr;
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty sweep csv " + path);
  {
    std::stringstream ss(line);
    std::string cell;
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      if (col >= 3) sr.lambdas.push_back(std::stod(cell.substr(cell.find('_') + 1)));
      ++col;
    }
  }
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    SweepBucket b;
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      if (col == 0) b.lo = std::stod(cell);
      else if (col == 1) b.hi = std::stod(cell);
      else if (col == 2) b.n = std::stoi(cell);
      else b.mean_id_sim.push_back(std::stod(cell));
      ++col;
    }
    if (b.mean_id_sim.size() != sr.lambdas.size())
      throw IoError("malformed sweep csv row in " + path);
    sr.buckets.push_back(std::move(b));
  }
  return sr;
}

SweepResult sweep(const SweepRestorer& restore, IdEncoder& idenc,
                  const std::vector<SweepItem>& items,
                  const std::vector<double>& lambdas,
                  const std::vector<double>& bucket_edges, uint64_t seed) {
  if (lambdas.size() < 2) throw ValidationError("sweep: need >= 2 lambdas");
  if (bucket_edges.size() < 3 || !std::is_sorted(bucket_edges.begin(), bucket_edges.end()))
    throw ValidationError("sweep: need >= 2 sorted buckets");
  const size_t nb = bucket_edges.size() - 1, nl = lambdas.size();

  std::vector<std::vector<double>> acc(nb, std::vector<double>(nl, 0.0));
  std::vector<int> count(nb, 0);

  for (size_t i = 0; i < items.size(); ++i) {
    const SweepItem& it = items[i];
    double q = quality_score(it.lq);
    size_t b = nb - 1;
    for (size_t k = 0; k < nb; ++k)
      if (q >= bucket_edges[k] && q < bucket_edges[k + 1]) { b = k; break; }
    IdentityEmbedding gt_e = embed(idenc, it.gt);
    for (size_t j = 0; j < nl; ++j) {
      Image r = restore(it.lq, it.ref, lambdas[j],
                        derive_seed(seed, i * 1000 + j));
      acc[b][j] += id_similarity(embed(idenc, r), gt_e);
    }
    ++count[b];
  }

  SweepResult sr;
  sr.lambdas = lambdas;
  for (size_t k = 0; k < nb; ++k) {
    if (count[k] == 0) {
      sr.warnings.push_back("empty bucket [" + std::to_string(bucket_edges[k]) + "," +
                            std::to_string(bucket_edges[k + 1]) + ") omitted");
      continue;
    }
    SweepBucket b;
    b.lo = bucket_edges[k];
    b.hi = bucket_edges[k + 1];
    b.n = count[k];
    b.mean_id_sim.resize(nl);
    for (size_t j = 0; j < nl; ++j) b.mean_id_sim[j] = acc[k][j] / count[k];
    sr.buckets.push_back(std::move(b));
  }
  return sr;
}

AidsaConfig calibrate(const SweepResult& sr, const std::vector<double>& alpha_grid,
                      const std::vector<double>& beta_grid) {
  if (sr.buckets.size() < 2) throw ValidationError("calibrate: need >= 2 buckets");
  if (sr.lambdas.size() < 2) throw ValidationError("calibrate: degenerate sweep");
  AidsaConfig best;
  double best_loss = -1.0;
  for (double a : alpha_grid)
    for (double b : beta_grid) {
      AidsaConfig c;
      c.alpha = a;
      c.beta = b;
      double loss = 0.0;
      for (size_t k = 0; k < sr.buckets.size(); ++k) {
        double qc = 0.5 * (sr.buckets[k].lo + sr.buckets[k].hi);
        double d = id_scale(qc, c) - sr.argmax_lambda(k);
        loss += d * d;
      }
      // strict improvement only: equal-loss ties keep the earlier (smaller
      // alpha, then smaller beta) candidate
      if (best_loss < 0 || loss < best_loss) {
        best_loss = loss;
        best = c;
      }
    }
  return best;
}

}  // namespace rid
