#pragma once

#include "refvos/model.hpp"

namespace refvos {

// lr0 * (1 + cos(pi * step/total)) / 2: starts at lr0, decays to 0.
double cosine_lr(double lr0, std::int64_t step, std::int64_t total_steps);

OptimizerState make_optimizer_state(const Model& model);

// One decoupled-weight-decay Adam step using the gradients accumulated on the
// parameter leaves; gradients are cleared afterwards. Weight decay skips
// biases and layer-norm parameters (anything shaped [1, n]).
void adamw_step(Model& model, OptimizerState& state, double lr);

void zero_gradients(Model& model);

}  // namespace refvos
