#pragma once

#include <fstream>
#include <span>
#include <vector>

#include "lmfap/dct.hpp"
#include "lmfap/embedder.hpp"
#include "lmfap/error.hpp"
#include "lmfap/jpeg.hpp"
#include "lmfap/tensor.hpp"

namespace lmfap {

struct MaskedAccuracy {
  std::size_t n = 0;
  double accuracy = 0;
  double drop = 0;  // clean accuracy minus masked accuracy
};

/// Verification accuracy on positive pairs when the probe loses DCT
/// component n, for each n in [n_lo, n_hi].
template <class T>
std::vector<MaskedAccuracy> masked_accuracy_sweep(const Embedder<T>& model, const VerificationRule& rule,
                                                  std::span<const Tensor<T>> probes, std::span<const Tensor<T>> enrolled,
                                                  std::size_t n_lo, std::size_t n_hi) {
  if (probes.empty()) throw EmptyManifest("masked accuracy sweep needs at least one pair");
  if (probes.size() != enrolled.size()) throw PairCountMismatch("probe/enrolled count mismatch");
  std::vector<std::vector<T>> targets;
  for (const auto& e : enrolled) targets.push_back(embed(model, e));
  auto accuracy = [&](auto&& transform) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < probes.size(); ++i)
      ok += rule.same(double(euclidean<T>(embed(model, transform(probes[i])), targets[i])));
    return double(ok) / double(probes.size());
  };
  const double clean = accuracy([](const Tensor<T>& p) -> const Tensor<T>& { return p; });
  std::vector<MaskedAccuracy> out;
  for (std::size_t n = n_lo; n <= n_hi; ++n) {
    const double acc = accuracy([n](const Tensor<T>& p) { return remove_component(p, n); });
    out.push_back({n, acc, clean - acc});
  }
  return out;
}

/// Which reference the post-compression perturbation is measured against.
enum class AttenuationReference {
  compressed_clean,  // delta_after = J(x + delta) - J(x)
  clean              // delta_after = J(x + delta) - x
};

/// Mean band spectrum of (delta - delta_after) at the given quality: the part
/// of the perturbation that compression removed.
template <class T>
SpectrumProfile jpeg_attenuation_profile(std::span<const Tensor<T>> originals, std::span<const Tensor<T>> adversarial,
                                         int quality,
                                         AttenuationReference ref = AttenuationReference::compressed_clean) {
  if (originals.size() != adversarial.size()) throw PairCountMismatch("original/adversarial count mismatch");
  if (originals.empty()) throw EmptyManifest("attenuation profile needs at least one image");
  SpectrumProfile mean;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    const auto& x = originals[i];
    const auto delta = adversarial[i] - x;
    const auto base = ref == AttenuationReference::compressed_clean ? jpeg_roundtrip(x, quality) : x;
    const auto after = jpeg_roundtrip(adversarial[i], quality) - base;
    const auto p = band_spectrum(delta - after);
    if (mean.band_energy.empty()) mean.band_energy.assign(p.bands(), 0.0);
    for (std::size_t b = 0; b < p.bands(); ++b) mean.band_energy[b] += p.band_energy[b] / double(originals.size());
  }
  return mean;
}

/// Mean band spectrum over a set of perturbations.
template <class T>
SpectrumProfile mean_band_spectrum(std::span<const Tensor<T>> deltas) {
  if (deltas.empty()) throw EmptyManifest("no perturbations");
  SpectrumProfile mean;
  for (const auto& d : deltas) {
    const auto p = band_spectrum(d);
    if (mean.band_energy.empty()) mean.band_energy.assign(p.bands(), 0.0);
    for (std::size_t b = 0; b < p.bands(); ++b) mean.band_energy[b] += p.band_energy[b] / double(deltas.size());
  }
  return mean;
}

inline void write_profile_csv(const SpectrumProfile& p, std::ostream& os) {
  os << "band,energy\n";
  os.precision(10);
  for (std::size_t b = 1; b <= p.bands(); ++b) os << b << ',' << p.band(b) << '\n';
}

}  // namespace lmfap
