#pragma once
// Observable dictionaries psi(x) = (1, g(x), tail(x)).
//
// The constant and g(x) components are computed outside any tape, so they are
// bit-exact and carry no trainable parameters. The tail is either a residual
// tanh network or a fixed set of Gaussian radial basis functions.

#include "pk/autodiff.hpp"
#include "pk/nn.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>

namespace pk::dict {

enum class Observable {
  /// g(x) = x
  Identity,
  /// g(eta) = (mass, momentum) on the periodic grid
  MassMomentum,
};

enum class Tail { None, Network, Rbf };

/// Optional affine map z = (x - shift) .* scale applied before the tail.
struct Scaler {
  Eigen::VectorXd shift;
  Eigen::VectorXd scale;

  bool active() const { return shift.size() > 0; }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  /// Maps the data box of `x` (state_dim x samples) onto [-1, 1].
  static Scaler fit(const Eigen::MatrixXd& x);
};

class Dictionary {
 public:
  Dictionary() = default;

  /// psi = (1, g(x)) only.
  static Dictionary prefix_only(Observable g, Eigen::Index state_dim);
  /// psi = (1, g(x), NN(x)) with a residual network of the given hidden widths.
  static Dictionary network(Observable g, Eigen::Index state_dim, Eigen::Index n_psi,
                            std::vector<Eigen::Index> hidden_widths, std::uint64_t seed);
  /// psi = (1, g(x), exp(-gamma |x - c_k|^2)) with centers drawn uniformly from
  /// the bounding box of `data`; gamma = 1 / (2 median^2) of pairwise center distances.
  static Dictionary rbf(Observable g, const Eigen::MatrixXd& data, Eigen::Index n_centers, std::uint64_t seed);
  /// RBF dictionary with explicit centers and shape parameter.
  static Dictionary rbf_from(Observable g, Eigen::MatrixXd centers, double gamma);

  Observable observable() const { return g_; }
  Tail tail() const { return tail_; }
  Eigen::Index state_dim() const { return state_dim_; }
  Eigen::Index n_obs() const;
  Eigen::Index n_psi() const;
  Eigen::Index tail_dim() const { return n_psi() - 1 - n_obs(); }
  bool trainable() const { return tail_ == Tail::Network; }

  const nn::NetworkSpec& net_spec() const { return spec_; }
  const Eigen::MatrixXd& centers() const { return centers_; }
  double gamma() const { return gamma_; }
  const Scaler& scaler() const { return scaler_; }
  void set_scaler(Scaler s);

  /// Trainable parameters (empty unless the tail is a network).
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  /// g(x) for one state.
  Eigen::VectorXd observables(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::MatrixXd observables_batch(const Eigen::MatrixXd& x) const;

  Eigen::VectorXd evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Columnwise evaluate; n_psi x samples.
  Eigen::MatrixXd evaluate_batch(const Eigen::MatrixXd& x) const;

  /// Records psi(x) on `tape` with the tail parameters taken from the segment
  /// of `theta` starting at `offset`. The prefix rows enter as constants.
  ad::Var lift(ad::Tape& tape, ad::Var theta, Eigen::Index offset, const Eigen::MatrixXd& x) const;

  /// Precomputed constant rows and scaled tail inputs for repeated lifting of one batch.
  struct Prepared {
    Eigen::MatrixXd prefix;
    Eigen::MatrixXd tail_input;
  };
  Prepared prepare(const Eigen::MatrixXd& x) const;
  ad::Var lift(ad::Tape& tape, ad::Var theta, Eigen::Index offset, const Prepared& prepared) const;

 private:
  Eigen::MatrixXd prefix_batch(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd tail_batch(const Eigen::MatrixXd& z) const;

  Observable g_ = Observable::Identity;
  Tail tail_ = Tail::None;
  Eigen::Index state_dim_ = 0;
  nn::NetworkSpec spec_;
  Eigen::VectorXd params_;
  Eigen::MatrixXd centers_;
  double gamma_ = 0.0;
  Scaler scaler_;
};

/// Observable selector B = [0 | I_{n_obs} | 0] of shape n_obs x n_psi.
Eigen::MatrixXd selector(Eigen::Index n_obs, Eigen::Index n_psi);

/// Rows `rows` of the full selector, e.g. {0} picks the first observable only.
Eigen::MatrixXd selector_rows(Eigen::Index n_obs, Eigen::Index n_psi, const std::vector<Eigen::Index>& rows);

std::string to_string(Observable g);
Observable observable_from_string(const std::string& s);

}  // namespace pk::dict
