#pragma once

// Brute-force density-matrix reference for small chains. Used to check the Werner
// parameter algebra that the simulator relies on.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace qrchain::oracle {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;

inline constexpr int kMaxQubits = 8;

/// Density matrix over `num_qubits` qubits. Qubit 0 is the most significant bit of the
/// basis index, so kron(A, B) puts A on the lower-numbered qubits.
class DensityMatrix {
 public:
  explicit DensityMatrix(Matrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw std::invalid_argument("density matrix must be square");
    const auto d = static_cast<std::size_t>(m_.rows());
    if (d == 0 || (d & (d - 1)) != 0) throw std::invalid_argument("dimension must be 2^k");
    n_ = 0;
    while ((std::size_t{1} << n_) < d) ++n_;
    if (n_ > kMaxQubits) throw std::invalid_argument("oracle is limited to 8 qubits");
  }

  int num_qubits() const { return n_; }
  Eigen::Index dim() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }

  double trace() const { return m_.trace().real(); }
  double hermiticity_error() const { return (m_ - m_.adjoint()).cwiseAbs().maxCoeff(); }
  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m_ + m_.adjoint()));
    return es.eigenvalues().minCoeff();
  }

 private:
  Matrix m_;
  int n_ = 0;
};

namespace detail {

inline int bit_of(std::size_t index, int qubit, int n) {
  return static_cast<int>((index >> (n - 1 - qubit)) & 1U);
}

inline std::size_t with_bit(std::size_t index, int qubit, int n, int value) {
  const std::size_t mask = std::size_t{1} << (n - 1 - qubit);
  return value ? (index | mask) : (index & ~mask);
}

inline void check_qubits(const std::vector<int>& qubits, int n) {
  for (std::size_t i = 0; i < qubits.size(); ++i) {
    if (qubits[i] < 0 || qubits[i] >= n) throw std::invalid_argument("qubit index out of range");
    for (std::size_t j = 0; j < i; ++j) {
      if (qubits[i] == qubits[j]) throw std::invalid_argument("repeated qubit index");
    }
  }
}

// Sub-index of `index` restricted to `qubits` (first listed qubit is most significant).
inline std::size_t gather(std::size_t index, const std::vector<int>& qubits, int n) {
  std::size_t out = 0;
  for (int q : qubits) out = (out << 1) | static_cast<std::size_t>(bit_of(index, q, n));
  return out;
}

inline std::size_t scatter(std::size_t index, const std::vector<int>& qubits, int n,
                           std::size_t sub) {
  const int k = static_cast<int>(qubits.size());
  for (int i = 0; i < k; ++i) {
    index = with_bit(index, qubits[static_cast<std::size_t>(i)], n,
                     static_cast<int>((sub >> (k - 1 - i)) & 1U));
  }
  return index;
}

}  // namespace detail

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

inline DensityMatrix tensor(const DensityMatrix& a, const DensityMatrix& b) {
  return DensityMatrix(kron(a.matrix(), b.matrix()));
}

/// Lifts an operator on `qubits` to the full n-qubit space.
inline Matrix embed(const Matrix& op, const std::vector<int>& qubits, int n) {
  detail::check_qubits(qubits, n);
  const auto dim = static_cast<std::size_t>(1) << n;
  Matrix full = Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (std::size_t col = 0; col < dim; ++col) {
    const std::size_t sub_col = detail::gather(col, qubits, n);
    for (Eigen::Index sub_row = 0; sub_row < op.rows(); ++sub_row) {
      const Complex v = op(sub_row, static_cast<Eigen::Index>(sub_col));
      if (v == Complex{}) continue;
      const std::size_t row = detail::scatter(col, qubits, n, static_cast<std::size_t>(sub_row));
      full(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) += v;
    }
  }
  return full;
}

/// Traces out `qubits`; the remaining qubits keep their relative order.
inline DensityMatrix partial_trace(const DensityMatrix& rho, const std::vector<int>& qubits) {
  const int n = rho.num_qubits();
  detail::check_qubits(qubits, n);
  std::vector<int> keep;
  for (int q = 0; q < n; ++q) {
    if (std::find(qubits.begin(), qubits.end(), q) == qubits.end()) keep.push_back(q);
  }
  const auto d_keep = std::size_t{1} << keep.size();
  const auto d_tr = std::size_t{1} << qubits.size();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(d_keep), static_cast<Eigen::Index>(d_keep));
  for (std::size_t i = 0; i < d_keep; ++i) {
    for (std::size_t j = 0; j < d_keep; ++j) {
      Complex acc{};
      for (std::size_t t = 0; t < d_tr; ++t) {
        const std::size_t row = detail::scatter(detail::scatter(0, keep, n, i), qubits, n, t);
        const std::size_t col = detail::scatter(detail::scatter(0, keep, n, j), qubits, n, t);
        acc += rho.matrix()(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col));
      }
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = acc;
    }
  }
  return DensityMatrix(std::move(out));
}

inline Matrix phi_plus_projector() {
  Matrix m = Matrix::Zero(4, 4);
  m(0, 0) = m(0, 3) = m(3, 0) = m(3, 3) = 0.5;
  return m;
}

/// W |phi+><phi+| + (1 - W) I/4.
inline DensityMatrix werner_state(double w) {
  if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("werner parameter must be in [0, 1]");
  return DensityMatrix(w * phi_plus_projector() + (1.0 - w) / 4.0 * Matrix::Identity(4, 4));
}

/// <phi+| rho |phi+> for a two-qubit state.
inline double bell_fidelity(const DensityMatrix& rho) {
  if (rho.num_qubits() != 2) throw std::invalid_argument("bell_fidelity needs two qubits");
  return (phi_plus_projector() * rho.matrix()).trace().real();
}

inline double werner_from_fidelity(double f) { return (4.0 * f - 1.0) / 3.0; }

/// p * rho + (1 - p) * (I_T / d_T  (x)  Tr_T rho), with T = `qubits`.
inline DensityMatrix depolarize(const DensityMatrix& rho, double p, const std::vector<int>& qubits) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("depolarizing parameter must be in [0, 1]");
  const int n = rho.num_qubits();
  detail::check_qubits(qubits, n);
  if (qubits.empty()) throw std::invalid_argument("depolarize needs at least one target qubit");
  const auto dim = static_cast<std::size_t>(rho.dim());
  const auto d_t = std::size_t{1} << qubits.size();
  Matrix mixed = Matrix::Zero(rho.dim(), rho.dim());
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      if (detail::gather(i, qubits, n) != detail::gather(j, qubits, n)) continue;
      Complex acc{};
      for (std::size_t t = 0; t < d_t; ++t) {
        acc += rho.matrix()(static_cast<Eigen::Index>(detail::scatter(i, qubits, n, t)),
                            static_cast<Eigen::Index>(detail::scatter(j, qubits, n, t)));
      }
      mixed(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          acc / static_cast<double>(d_t);
    }
  }
  return DensityMatrix(p * rho.matrix() + (1.0 - p) * mixed);
}

/// Memory decoherence of one qubit stored for time t.
inline DensityMatrix decohere(const DensityMatrix& rho, int qubit, double t, double coherence_time) {
  return depolarize(rho, std::exp(-t / coherence_time), {qubit});
}

/// Two-qubit depolarizing (s_q) on (q1, q2), Bell measurement of (q1, q2), Pauli
/// correction on `corrected`, then q1 and q2 are traced out. The four outcomes are
/// summed with their corrections, giving the outcome-averaged state.
inline DensityMatrix bell_measure_and_correct(const DensityMatrix& rho, int q1, int q2,
                                              int corrected, double swap_quality) {
  const int n = rho.num_qubits();
  detail::check_qubits({q1, q2, corrected}, n);
  const DensityMatrix noisy = depolarize(rho, swap_quality, {q1, q2});

  const double s = 1.0 / std::sqrt(2.0);
  // phi+, psi+, phi-, psi- and the correction that maps each branch back to phi+.
  const std::vector<std::vector<double>> bell = {
      {s, 0, 0, s}, {0, s, s, 0}, {s, 0, 0, -s}, {0, s, -s, 0}};
  Matrix x(2, 2), z(2, 2), id = Matrix::Identity(2, 2);
  x << 0, 1, 1, 0;
  z << 1, 0, 0, -1;
  const std::vector<Matrix> fix = {id, x, z, z * x};

  Matrix acc = Matrix::Zero(rho.dim(), rho.dim());
  for (std::size_t k = 0; k < 4; ++k) {
    Eigen::VectorXcd v(4);
    for (Eigen::Index i = 0; i < 4; ++i) v(i) = bell[k][static_cast<std::size_t>(i)];
    const Matrix proj = embed(v * v.adjoint(), {q1, q2}, n);
    const Matrix corr = embed(fix[k], {corrected}, n);
    const Matrix op = corr * proj;
    acc += op * noisy.matrix() * op.adjoint();
  }
  return partial_trace(DensityMatrix(std::move(acc)), {q1, q2});
}

/// Entanglement swap of pair (a, b) with pair (c, d); returns the state on (a, d).
inline DensityMatrix bell_swap(const DensityMatrix& rho_ab, const DensityMatrix& rho_cd,
                               double swap_quality) {
  if (rho_ab.num_qubits() != 2 || rho_cd.num_qubits() != 2) {
    throw std::invalid_argument("bell_swap needs two two-qubit states");
  }
  if (!(swap_quality >= 0.0 && swap_quality <= 1.0)) {
    throw std::invalid_argument("swap_quality must be in [0, 1]");
  }
  return bell_measure_and_correct(tensor(rho_ab, rho_cd), 1, 2, 3, swap_quality);
}

/// Largest deviation of a two-qubit state from Werner form: off-diagonal Bell-basis
/// entries and unequal weights on the three non-phi+ Bell states.
inline double werner_form_error(const DensityMatrix& rho) {
  if (rho.num_qubits() != 2) throw std::invalid_argument("werner_form_error needs two qubits");
  const double s = 1.0 / std::sqrt(2.0);
  Matrix basis(4, 4);
  basis << s, 0, s, 0,  //
      0, s, 0, s,       //
      0, s, 0, -s,      //
      s, 0, -s, 0;
  const Matrix b = basis.adjoint() * rho.matrix() * basis;
  double err = 0.0;
  for (Eigen::Index i = 0; i < 4; ++i) {
    for (Eigen::Index j = 0; j < 4; ++j) {
      if (i != j) err = std::max(err, std::abs(b(i, j)));
    }
  }
  err = std::max(err, std::abs(b(1, 1) - b(2, 2)));
  err = std::max(err, std::abs(b(2, 2) - b(3, 3)));
  return err;
}

/// End-to-end state of a linear chain evaluated on the full multi-qubit state.
///
/// Link i holds qubits (2i, 2i+1). `storage[j]` is how long repeater qubit j was held
/// before its swap, in the order left qubit of repeater 1, right qubit of repeater 1,
/// left qubit of repeater 2, ... Swaps run left to right. At most four links.
inline DensityMatrix chain_state(const std::vector<double>& link_werners, double swap_quality,
                                 const std::vector<double>& storage, double coherence_time) {
  const auto links = link_werners.size();
  if (links == 0 || 2 * links > static_cast<std::size_t>(kMaxQubits)) {
    throw std::invalid_argument("chain_state supports 1 to 4 links");
  }
  if (storage.size() != 2 * (links - 1)) throw std::invalid_argument("need two storage times per repeater");
  DensityMatrix rho = werner_state(link_werners[0]);
  for (std::size_t i = 1; i < links; ++i) rho = tensor(rho, werner_state(link_werners[i]));
  for (std::size_t j = 0; j < storage.size(); ++j) {
    rho = decohere(rho, static_cast<int>(j + 1), storage[j], coherence_time);
  }
  // After each swap the two measured qubits vanish, so the next repeater's qubits sit
  // at indices 1 and 2 again and its partner at 3.
  for (std::size_t i = 1; i < links; ++i) rho = bell_measure_and_correct(rho, 1, 2, 3, swap_quality);
  return rho;
}

}  // namespace qrchain::oracle
