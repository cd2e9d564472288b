#include "sdefim/polynomial.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "sdefim/error.hpp"

namespace sdefim {

int MultiIndex::degree() const noexcept {
  return std::accumulate(exponents.begin(), exponents.end(), 0);
}

std::strong_ordering MultiIndex::operator<=>(const MultiIndex& other) const {
  if (auto c = degree() <=> other.degree(); c != 0) return c;
  if (auto c = arity() <=> other.arity(); c != 0) return c;
  for (std::size_t j = 0; j < exponents.size(); ++j) {
    if (exponents[j] != other.exponents[j]) return other.exponents[j] <=> exponents[j];
  }
  return std::strong_ordering::equal;
}

namespace {

void enumerate_rec(int position, int remaining, std::vector<int>& current, std::vector<MultiIndex>& out) {
  const int arity = static_cast<int>(current.size());
  if (position == arity - 1) {
    current[position] = remaining;
    out.push_back(MultiIndex{current});
    return;
  }
  for (int e = remaining; e >= 0; --e) {
    current[position] = e;
    enumerate_rec(position + 1, remaining - e, current, out);
  }
}

}  // namespace

std::vector<MultiIndex> enumerate_multi_indices(int arity, int degree) {
  if (arity < 1) throw DimensionError("multi-index arity must be positive");
  if (degree < 0) return {};
  std::vector<MultiIndex> out;
  std::vector<int> current(arity, 0);
  enumerate_rec(0, degree, current, out);
  return out;
}

Polynomial::Polynomial(int arity) : arity_(arity) {
  if (arity < 1) throw DimensionError("polynomial arity must be positive");
}

Polynomial::Polynomial(int arity, std::vector<Term> terms) : arity_(arity), terms_(std::move(terms)) {
  if (arity < 1) throw DimensionError("polynomial arity must be positive");
  for (const auto& t : terms_) {
    if (t.index.arity() != arity_) throw DimensionError("term arity does not match polynomial arity");
    for (int e : t.index.exponents) {
      if (e < 0) throw DimensionError("negative exponent in multi-index");
    }
  }
  canonicalize();
}

Polynomial Polynomial::constant(int arity, double value) {
  return Polynomial(arity, {Term{MultiIndex{std::vector<int>(arity, 0)}, value}});
}

void Polynomial::canonicalize() {
  std::stable_sort(terms_.begin(), terms_.end(),
                   [](const Term& a, const Term& b) { return a.index < b.index; });
  std::vector<Term> merged;
  merged.reserve(terms_.size());
  for (auto& t : terms_) {
    if (!merged.empty() && merged.back().index == t.index) {
      merged.back().coefficient += t.coefficient;
    } else {
      merged.push_back(std::move(t));
    }
  }
  terms_ = std::move(merged);
}

int Polynomial::degree() const noexcept {
  int d = -1;
  for (const auto& t : terms_) d = std::max(d, t.index.degree());
  return d;
}

double Polynomial::operator()(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != arity_) {
    throw DimensionError("polynomial of arity " + std::to_string(arity_) + " evaluated at a point of dimension " +
                         std::to_string(x.size()));
  }
  double sum = 0.0;
  for (const auto& t : terms_) {
    double m = t.coefficient;
    for (int j = 0; j < arity_; ++j) {
      for (int k = 0; k < t.index.exponents[j]; ++k) m *= x[j];
    }
    sum += m;
  }
  return sum;
}

double Polynomial::operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return (*this)(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
}

Polynomial& Polynomial::add_term(const MultiIndex& index, double coefficient) {
  if (index.arity() != arity_) throw DimensionError("term arity does not match polynomial arity");
  terms_.push_back(Term{index, coefficient});
  canonicalize();
  return *this;
}

Polynomial Polynomial::operator+(const Polynomial& other) const {
  if (other.arity_ != arity_) throw DimensionError("cannot add polynomials of different arity");
  std::vector<Term> all(terms_);
  all.insert(all.end(), other.terms_.begin(), other.terms_.end());
  return Polynomial(arity_, std::move(all));
}

Polynomial Polynomial::operator*(double scale) const {
  std::vector<Term> scaled(terms_);
  for (auto& t : scaled) t.coefficient *= scale;
  return Polynomial(arity_, std::move(scaled));
}

bool Polynomial::operator==(const Polynomial& other) const {
  if (arity_ != other.arity_ || terms_.size() != other.terms_.size()) return false;
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    if (!(terms_[i].index == other.terms_[i].index) || terms_[i].coefficient != other.terms_[i].coefficient) {
      return false;
    }
  }
  return true;
}

std::string Polynomial::to_string() const {
  if (terms_.empty()) return "0";
  std::ostringstream os;
  os.precision(17);
  bool first = true;
  for (const auto& t : terms_) {
    if (!first) os << " + ";
    first = false;
    os << t.coefficient;
    for (int j = 0; j < arity_; ++j) {
      const int e = t.index.exponents[j];
      if (e == 0) continue;
      os << "*x" << (j + 1);
      if (e > 1) os << "^" << e;
    }
  }
  return os.str();
}

}  // namespace sdefim
