#include "pk/nn.hpp"

#include "pk/error.hpp"

#include <cmath>
#include <random>
#include <string>

namespace pk::nn {

void validate(const NetworkSpec& spec) {
  require_dims(spec.input_dim >= 1 && spec.output_dim >= 1, "NetworkSpec: input/output dims must be >= 1");
  for (auto w : spec.hidden_widths) require_dims(w >= 1, "NetworkSpec: hidden widths must be >= 1");
}

std::vector<LayerSlot> layout(const NetworkSpec& spec) {
  validate(spec);
  std::vector<LayerSlot> slots;
  Eigen::Index offset = 0;
  Eigen::Index fan_in = spec.input_dim;
  auto add = [&](Eigen::Index fan_out, bool hidden) {
    LayerSlot s;
    s.fan_in = fan_in;
    s.fan_out = fan_out;
    s.weight_offset = offset;
    s.bias_offset = offset + fan_in * fan_out;
    s.activated = hidden;
    s.skip = hidden && spec.residual && fan_in == fan_out;
    offset = s.bias_offset + fan_out;
    fan_in = fan_out;
    slots.push_back(s);
  };
  for (auto w : spec.hidden_widths) add(w, true);
  add(spec.output_dim, false);
  return slots;
}

Eigen::Index parameter_count(const NetworkSpec& spec) {
  const auto slots = layout(spec);
  return slots.back().bias_offset + slots.back().fan_out;
}

double glorot_bound(Eigen::Index fan_in, Eigen::Index fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Eigen::VectorXd init_params(const NetworkSpec& spec, std::uint64_t seed) {
  const auto slots = layout(spec);
  Eigen::VectorXd params = Eigen::VectorXd::Zero(parameter_count(spec));
  std::mt19937_64 rng(seed);
  for (const auto& s : slots) {
    const double bound = glorot_bound(s.fan_in, s.fan_out);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < s.fan_in * s.fan_out; ++i) params(s.weight_offset + i) = dist(rng);
  }
  return params;
}

Eigen::MatrixXd forward_batch(const NetworkSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& params,
                              const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  const auto slots = layout(spec);
  require_dims(params.size() == parameter_count(spec), "forward: parameter vector length mismatch");
  require_dims(inputs.rows() == spec.input_dim, "forward: input dimension mismatch");
  Eigen::MatrixXd h = inputs;
  for (const auto& s : slots) {
    Eigen::Map<const Eigen::MatrixXd> w(params.data() + s.weight_offset, s.fan_out, s.fan_in);
    Eigen::Map<const Eigen::VectorXd> b(params.data() + s.bias_offset, s.fan_out);
    Eigen::MatrixXd z = w * h;
    z.colwise() += b;
    if (s.activated) {
      z = z.array().tanh().matrix();
      if (s.skip) z += h;
    }
    h = std::move(z);
  }
  return h;
}

Eigen::VectorXd forward(const NetworkSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& params,
                        const Eigen::Ref<const Eigen::VectorXd>& input) {
  return forward_batch(spec, params, input);
}

ad::Var forward(ad::Tape& tape, const NetworkSpec& spec, ad::Var params, Eigen::Index offset, ad::Var inputs) {
  const auto slots = layout(spec);
  require_dims(tape.value(inputs).rows() == spec.input_dim, "forward: input dimension mismatch");
  ad::Var h = inputs;
  for (const auto& s : slots) {
    const ad::Var w = tape.reshape_block(params, offset + s.weight_offset, s.fan_out, s.fan_in);
    const ad::Var b = tape.reshape_block(params, offset + s.bias_offset, s.fan_out, 1);
    ad::Var z = tape.add_bias(tape.matmul(w, h), b);
    if (s.activated) {
      z = tape.tanh(z);
      if (s.skip) z = tape.add(z, h);
    }
    h = z;
  }
  return h;
}

double value_and_gradient(const LossBuilder& loss, const Eigen::VectorXd& params, Eigen::VectorXd& grad) {
  ad::Tape tape;
  const ad::Var p = tape.variable(params);
  const ad::Var l = loss(tape, p);
  tape.backward(l);
  const auto& g = tape.grad(p);
  if (g.size() == 0) {
    grad = Eigen::VectorXd::Zero(params.size());
  } else {
    grad = Eigen::Map<const Eigen::VectorXd>(g.data(), params.size());
  }
  return tape.scalar(l);
}

Eigen::VectorXd gradient(const LossBuilder& loss, const Eigen::VectorXd& params) {
  Eigen::VectorXd g;
  value_and_gradient(loss, params, g);
  return g;
}

}  // namespace pk::nn
