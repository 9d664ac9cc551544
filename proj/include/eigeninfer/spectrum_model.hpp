#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "eigeninfer/moments.hpp"

namespace eigeninfer {

struct SpectrumAtom {
  double value = 0.0;   // eigenvalue location, > 0
  double weight = 0.0;  // fraction of the spectrum at that location, in (0, 1]
};

// Discrete spectrum: a few distinct positive atoms with weights summing to 1.
// Construction sorts atoms descending by value, merges coincident ones and
// renormalizes the weights after validating the sum.
class SpectrumModel {
public:
  SpectrumModel() = default;

  SpectrumModel(std::vector<double> values, std::vector<double> weights,
                double merge_tol = 1e-12, double weight_sum_tol = 1e-12) {
    if (values.size() != weights.size())
      throw std::invalid_argument("spectrum values/weights size mismatch");
    if (values.empty()) throw std::invalid_argument("empty spectrum");
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
    double sum = 0.0;
    for (std::size_t i : idx) {
      double v = values[i], w = weights[i];
      if (!(v > 0.0) || !std::isfinite(v))
        throw std::invalid_argument("spectrum atoms must be positive and finite");
      if (!(w > 0.0) || !std::isfinite(w))
        throw std::invalid_argument("spectrum weights must be positive and finite");
      sum += w;
      if (!atoms_.empty() && atoms_.back().value - v <= merge_tol * atoms_.back().value)
        atoms_.back().weight += w;
      else
        atoms_.push_back({v, w});
    }
    if (std::abs(sum - 1.0) > weight_sum_tol)
      throw std::invalid_argument("spectrum weights must sum to 1");
    for (auto& a : atoms_) a.weight /= sum;
  }

  static SpectrumModel single_atom(double value) { return SpectrumModel({value}, {1.0}); }

  const std::vector<SpectrumAtom>& atoms() const { return atoms_; }
  int atom_count() const { return static_cast<int>(atoms_.size()); }
  bool empty() const { return atoms_.empty(); }

  // alpha_k = sum_i p_i Lambda_i^k for k = 1..K.
  std::vector<double> moments(int K) const {
    std::vector<double> m(static_cast<std::size_t>(K), 0.0);
    for (const auto& a : atoms_) {
      double pw = a.weight;
      for (int k = 1; k <= K; ++k) {
        pw *= a.value;
        m[static_cast<std::size_t>(k - 1)] += pw;
      }
    }
    return m;
  }

  // alpha_{-k} = sum_i p_i Lambda_i^-k for k = 1..K.
  std::vector<double> dual_moments(int K) const {
    std::vector<double> m(static_cast<std::size_t>(K), 0.0);
    for (const auto& a : atoms_) {
      double pw = a.weight;
      for (int k = 1; k <= K; ++k) {
        pw /= a.value;
        m[static_cast<std::size_t>(k - 1)] += pw;
      }
    }
    return m;
  }

  // Same power sums carried in a caller-chosen scalar, for pipelines that
  // keep more precision than double end to end.
  template <class Real>
  std::vector<Real> moments_as(int K, MomentFamily family) const {
    std::vector<Real> m(static_cast<std::size_t>(K), Real(0));
    for (const auto& a : atoms_) {
      Real pw = Real(a.weight);
      for (int k = 1; k <= K; ++k) {
        if (family == MomentFamily::Normal)
          pw *= Real(a.value);
        else
          pw /= Real(a.value);
        m[static_cast<std::size_t>(k - 1)] += pw;
      }
    }
    return m;
  }

private:
  std::vector<SpectrumAtom> atoms_;
};

// Exact population moments of a model, packaged as a MomentVector.
inline MomentVector moments_of_model(const SpectrumModel& model, int K, MomentFamily family) {
  MomentVector mv;
  mv.subject = MatrixSubject::Sigma;
  mv.family = family;
  mv.values = family == MomentFamily::Normal ? model.moments(K) : model.dual_moments(K);
  return mv;
}

}  // namespace eigeninfer
