#pragma once

#include <compare>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace sdefim {

/// Exponent vector of a monomial x^alpha.
struct MultiIndex {
  std::vector<int> exponents;

  int arity() const noexcept { return static_cast<int>(exponents.size()); }
  int degree() const noexcept;

  /// Graded-lexicographic order: lower total degree first, then larger
  /// leading exponents first (x1^3 < x1^2 x2 < ... within degree 3).
  std::strong_ordering operator<=>(const MultiIndex& other) const;
  bool operator==(const MultiIndex& other) const = default;
};

/// All multi-indices of arity n and total degree m, in graded-lex order.
std::vector<MultiIndex> enumerate_multi_indices(int arity, int degree);

struct Term {
  MultiIndex index;
  double coefficient = 0.0;
};

/// Sparse n-variate polynomial sum_alpha c_alpha x^alpha.
///
/// Terms are kept distinct and sorted in graded-lex order, so two equal
/// polynomials always compare and serialize identically.
class Polynomial {
 public:
  explicit Polynomial(int arity = 1);
  Polynomial(int arity, std::vector<Term> terms);

  static Polynomial constant(int arity, double value);

  int arity() const noexcept { return arity_; }
  /// Highest total degree among terms; -1 for the zero polynomial.
  int degree() const noexcept;
  std::span<const Term> terms() const noexcept { return terms_; }
  bool empty() const noexcept { return terms_.empty(); }

  double operator()(std::span<const double> x) const;
  double operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  Polynomial& add_term(const MultiIndex& index, double coefficient);

  Polynomial operator+(const Polynomial& other) const;
  Polynomial operator*(double scale) const;

  bool operator==(const Polynomial& other) const;

  std::string to_string() const;

 private:
  void canonicalize();

  int arity_;
  std::vector<Term> terms_;
};

}  // namespace sdefim
