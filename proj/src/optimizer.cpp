#include "refvos/optimizer.hpp"

#include <cmath>

namespace refvos {

double cosine_lr(double lr0, std::int64_t step, std::int64_t total_steps) {
  if (total_steps <= 0) return lr0;
  if (step >= total_steps) return 0.0;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr0 * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

OptimizerState make_optimizer_state(const Model& model) {
  OptimizerState st;
  for (const auto& [name, tensor] : model.params.items()) {
    (void)name;
    st.m.push_back(Eigen::ArrayXd::Zero(tensor.numel()));
    st.v.push_back(Eigen::ArrayXd::Zero(tensor.numel()));
  }
  return st;
}

void adamw_step(Model& model, OptimizerState& state, double lr) {
  const auto& oc = model.cfg.optimizer;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(oc.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(oc.beta2, static_cast<double>(state.step));
  const auto& items = model.params.items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto node = items[i].second.node();
    node->ensure_grad();
    Eigen::ArrayXd& g = node->grad;
    state.m[i] = oc.beta1 * state.m[i] + (1.0 - oc.beta1) * g;
    state.v[i] = oc.beta2 * state.v[i] + (1.0 - oc.beta2) * g * g;
    const Eigen::ArrayXd m_hat = state.m[i] / bc1;
    const Eigen::ArrayXd v_hat = state.v[i] / bc2;
    const bool decay = items[i].second.shape().at(0) != 1;  // skip biases / layer norms
    if (decay && oc.weight_decay > 0.0) node->value -= lr * oc.weight_decay * node->value;
    node->value -= lr * m_hat / (v_hat.sqrt() + oc.eps);
    g.setZero();
  }
}

void zero_gradients(Model& model) {
  for (const auto& [name, tensor] : model.params.items()) {
    (void)name;
    auto node = tensor.node();
    if (node->grad.size() == node->value.size()) node->grad.setZero();
  }
}

}  // namespace refvos
