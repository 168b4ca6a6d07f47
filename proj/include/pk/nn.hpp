#pragma once
// Dense tanh networks over flat parameter vectors.

#include "pk/autodiff.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

namespace pk::nn {

enum class Activation { Tanh };

struct NetworkSpec {
  Eigen::Index input_dim = 1;
  std::vector<Eigen::Index> hidden_widths;
  Eigen::Index output_dim = 1;
  Activation activation = Activation::Tanh;
  /// Hidden layers whose fan-in equals fan-out add an identity skip.
  bool residual = false;

  bool operator==(const NetworkSpec&) const = default;
};

/// Where one dense layer lives inside the flat parameter vector. The weight
/// is a fan_out x fan_in block stored column-major, followed by the bias.
struct LayerSlot {
  Eigen::Index weight_offset = 0;
  Eigen::Index bias_offset = 0;
  Eigen::Index fan_in = 0;
  Eigen::Index fan_out = 0;
  bool skip = false;
  bool activated = true;
};

/// Throws DimensionError for zero dimensions.
void validate(const NetworkSpec& spec);

std::vector<LayerSlot> layout(const NetworkSpec& spec);

Eigen::Index parameter_count(const NetworkSpec& spec);

/// Glorot-uniform weights, zero biases; deterministic in `seed`.
Eigen::VectorXd init_params(const NetworkSpec& spec, std::uint64_t seed);

/// Glorot bound sqrt(6 / (fan_in + fan_out)).
double glorot_bound(Eigen::Index fan_in, Eigen::Index fan_out);

Eigen::VectorXd forward(const NetworkSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& params,
                        const Eigen::Ref<const Eigen::VectorXd>& input);

/// Column-wise forward pass; `inputs` is input_dim x batch.
Eigen::MatrixXd forward_batch(const NetworkSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& params,
                              const Eigen::Ref<const Eigen::MatrixXd>& inputs);

/// Records the forward pass on `tape`. The network's parameters are the
/// segment [offset, offset + parameter_count(spec)) of the flat node `params`.
ad::Var forward(ad::Tape& tape, const NetworkSpec& spec, ad::Var params, Eigen::Index offset, ad::Var inputs);

/// Builds a scalar loss on a tape from the flat parameter variable.
using LossBuilder = std::function<ad::Var(ad::Tape&, ad::Var)>;

/// d loss / d params by reverse accumulation. Throws NumericalError on
/// non-finite intermediates.
Eigen::VectorXd gradient(const LossBuilder& loss, const Eigen::VectorXd& params);

/// Loss value and gradient from a single tape.
double value_and_gradient(const LossBuilder& loss, const Eigen::VectorXd& params, Eigen::VectorXd& grad);

}  // namespace pk::nn
