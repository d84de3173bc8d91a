#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "simdim/common.hpp"
#include "simdim/measure.hpp"
#include "simdim/quad_field.hpp"
#include "simdim/sim_group.hpp"

namespace simdim {

// Exact-arithmetic mode for d = 1 similarities x -> rho * s * x + b with
// rho, b in Q(sqrt 5) and s = +-1. Collisions in supp(mu^{*n}) are decided
// exactly, which removes tolerance anxiety from the Pisot demonstrations.
struct ExactElement {
  Quad rho;
  int sign = 1;  // the orthogonal part of O(1)
  Quad b;

  bool operator==(const ExactElement& o) const { return sign == o.sign && rho == o.rho && b == o.b; }
};

struct ExactElementHash {
  std::size_t operator()(const ExactElement& e) const {
    QuadHash qh;
    std::uint64_t h = qh(e.rho);
    h = h * 1099511628211ULL ^ static_cast<std::uint64_t>(e.sign + 2);
    h = h * 1099511628211ULL ^ qh(e.b);
    return static_cast<std::size_t>(h);
  }
};

inline ExactElement exact_compose(const ExactElement& g, const ExactElement& h) {
  ExactElement out;
  out.rho = g.rho * h.rho;
  out.sign = g.sign * h.sign;
  Quad scaled = g.rho * h.b;
  if (g.sign < 0) scaled = -scaled;
  out.b = scaled + g.b;
  return out;
}

inline ExactElement exact_identity() { return ExactElement{Quad::from_int(1), 1, Quad::from_int(0)}; }

inline SimElement to_float_element(const ExactElement& e) {
  return SimElement::scaling_1d(e.rho.to_double(), e.b.to_double(), e.sign < 0);
}

// Measure with exact atoms; weights are integer numerators over a common
// denominator so that word probabilities stay exact.
struct ExactMeasure {
  std::vector<ExactElement> atoms;
  std::vector<std::int64_t> weight_num;
  std::int64_t weight_den = 1;

  std::size_t support_size() const { return atoms.size(); }

  FiniteMeasure to_float_measure() const {
    std::vector<SimElement> els;
    std::vector<double> ws;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      els.push_back(to_float_element(atoms[i]));
      ws.push_back(static_cast<double>(weight_num[i]) / static_cast<double>(weight_den));
    }
    return FiniteMeasure(std::move(els), std::move(ws));
  }
};

// supp(mu^{*n}) with exact masses mass[i] / den, den = weight_den^n.
struct ExactGeneration {
  int n = 0;
  std::vector<ExactElement> elements;
  std::vector<std::int64_t> mass;
  std::int64_t den = 1;

  std::size_t size() const { return elements.size(); }

  double prob(std::size_t i) const { return static_cast<double>(mass[i]) / static_cast<double>(den); }
};

inline std::vector<ExactGeneration> exact_convolution_ladder(const ExactMeasure& mu, int n_max,
                                                             std::size_t budget = 20'000'000) {
  std::vector<ExactGeneration> gens;
  ExactGeneration prev;
  prev.n = 0;
  prev.elements.push_back(exact_identity());
  prev.mass.push_back(1);
  prev.den = 1;
  std::size_t spent = 0;
  for (int n = 1; n <= n_max; ++n) {
    const std::size_t products = prev.size() * mu.support_size();
    if (spent + products > budget) throw BudgetExceeded("exact ladder: budget exceeded", n - 1);
    spent += products;
    ExactGeneration cur;
    cur.n = n;
    const __int128 den128 = static_cast<__int128>(prev.den) * mu.weight_den;
    cur.den = detail::narrow_i128(den128, "generation denominator");
    std::unordered_map<ExactElement, std::int64_t, ExactElementHash> table;
    table.reserve(products);
    for (std::size_t i = 0; i < prev.size(); ++i) {
      for (std::size_t a = 0; a < mu.support_size(); ++a) {
        const ExactElement prod = exact_compose(prev.elements[i], mu.atoms[a]);
        const __int128 m = static_cast<__int128>(prev.mass[i]) * mu.weight_num[a];
        table[prod] += detail::narrow_i128(m, "word mass");
      }
    }
    cur.elements.reserve(table.size());
    cur.mass.reserve(table.size());
    for (auto& [el, m] : table) {
      cur.elements.push_back(el);
      cur.mass.push_back(m);
    }
    // Deterministic order: sort by (sign, rho, b) exactly.
    std::vector<std::size_t> order(cur.elements.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      const auto& ex = cur.elements[x];
      const auto& ey = cur.elements[y];
      if (ex.sign != ey.sign) return ex.sign < ey.sign;
      if (!(ex.rho == ey.rho)) return ex.rho < ey.rho;
      return ex.b < ey.b;
    });
    ExactGeneration sorted;
    sorted.n = n;
    sorted.den = cur.den;
    for (std::size_t i : order) {
      sorted.elements.push_back(cur.elements[i]);
      sorted.mass.push_back(cur.mass[i]);
    }
    gens.push_back(std::move(sorted));
    prev = gens.back();
  }
  return gens;
}

// H(mu^{*n}) = log(den) - (1/den) * sum mass_i log mass_i, evaluated with
// log(den) expanded as n * log(weight_den) to keep H/n sharp for the
// uniform-mass case.
inline double exact_entropy(const ExactGeneration& gen, std::int64_t weight_den) {
  double sum = 0.0;
  for (std::int64_t m : gen.mass)
    if (m > 1) sum += static_cast<double>(m) * std::log(static_cast<double>(m));
  return static_cast<double>(gen.n) * std::log(static_cast<double>(weight_den)) -
         sum / static_cast<double>(gen.den);
}

// Exact-or-numeric distance value: `exact` is set when the minimum is a pure
// translation gap (equal rho and sign), which is the case the acceptance
// checks pin as a rational.
struct ExactDistance {
  std::optional<Quad> exact;
  double value = std::numeric_limits<double>::infinity();
};

namespace detail {

inline double exact_pair_dist(const ExactElement& g, const ExactElement& h) {
  double v = std::abs(std::log(g.rho.to_double()) - std::log(h.rho.to_double()));
  v += std::abs(static_cast<double>(g.sign) - static_cast<double>(h.sign));
  v += std::abs((g.b - h.b).to_double());
  return v;
}

}  // namespace detail

inline ExactDistance exact_delta_n(const ExactGeneration& gen) {
  ExactDistance out;
  if (gen.size() < 2) return out;
  // Group by (rho, sign); within a group the distance is |b - b'| exactly.
  struct GroupKey {
    Quad rho;
    int sign;
    bool operator==(const GroupKey& o) const { return sign == o.sign && rho == o.rho; }
  };
  struct GroupKeyHash {
    std::size_t operator()(const GroupKey& k) const {
      return QuadHash{}(k.rho) * 1099511628211ULL ^ static_cast<std::uint64_t>(k.sign + 2);
    }
  };
  std::unordered_map<GroupKey, std::vector<std::size_t>, GroupKeyHash> groups;
  for (std::size_t i = 0; i < gen.size(); ++i)
    groups[GroupKey{gen.elements[i].rho, gen.elements[i].sign}].push_back(i);

  std::optional<Quad> best_exact;
  for (auto& [key, idx] : groups) {
    if (idx.size() < 2) continue;
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t x, std::size_t y) { return gen.elements[x].b < gen.elements[y].b; });
    for (std::size_t i = 0; i + 1 < idx.size(); ++i) {
      const Quad gap = abs(gen.elements[idx[i + 1]].b - gen.elements[idx[i]].b);
      if (!best_exact || gap < *best_exact) best_exact = gap;
    }
  }
  double best_cross = std::numeric_limits<double>::infinity();
  if (groups.size() > 1) {
    // Cross-group distances carry a log-rho or sign term; numeric value is
    // enough because those terms dominate any translation gap ambiguity.
    for (std::size_t i = 0; i < gen.size(); ++i)
      for (std::size_t j = i + 1; j < gen.size(); ++j) {
        const auto& g = gen.elements[i];
        const auto& h = gen.elements[j];
        if (g.sign == h.sign && g.rho == h.rho) continue;
        best_cross = std::min(best_cross, detail::exact_pair_dist(g, h));
      }
  }
  if (best_exact && best_exact->to_double() <= best_cross) {
    out.exact = best_exact;
    out.value = best_exact->to_double();
  } else {
    out.value = best_cross;
    if (best_exact) out.value = std::min(out.value, best_exact->to_double());
  }
  return out;
}

// M_n over the exact union of generations 0..n (identity included).
inline ExactDistance exact_m_n(const std::vector<ExactGeneration>& gens, int n) {
  ExactGeneration merged;
  merged.n = n;
  std::unordered_map<ExactElement, std::int64_t, ExactElementHash> seen;
  seen[exact_identity()] = 1;
  for (const auto& gen : gens) {
    if (gen.n > n) break;
    for (const auto& e : gen.elements) seen[e] = 1;
  }
  for (auto& [el, one] : seen) {
    merged.elements.push_back(el);
    merged.mass.push_back(one);
  }
  merged.den = static_cast<std::int64_t>(merged.elements.size());
  return exact_delta_n(merged);
}

}  // namespace simdim
