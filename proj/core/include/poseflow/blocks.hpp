#pragma once

#include <string>

#include "poseflow/params.hpp"

namespace poseflow {

// Reusable transformer pieces. Parameter names are created under a prefix
// so each module keeps its own namespace inside a shared store.

void init_linear(ParameterStore& store, const std::string& prefix, int in, int out,
                 bool zero = false);
Var linear_layer(Tape& t, Binder& bind, const std::string& prefix, Var x);

/// Two-layer MLP with GELU: in -> hidden -> out.
void init_mlp(ParameterStore& store, const std::string& prefix, int in, int hidden, int out,
              bool zero_out = false);
Var mlp_block(Tape& t, Binder& bind, const std::string& prefix, Var x);

void init_layer_norm(ParameterStore& store, const std::string& prefix, int dim);
Var layer_norm_layer(Tape& t, Binder& bind, const std::string& prefix, Var x);

/// Pre-norm residual self-attention + MLP block of uniform width.
void init_sa_block(ParameterStore& store, const std::string& prefix, int width, int mlp_ratio = 4);
Var sa_block(Tape& t, Binder& bind, const std::string& prefix, Var x, int heads);

/// Pre-norm residual cross-attention (separate LN on query and kv streams)
/// + MLP on the query stream.
void init_ca_block(ParameterStore& store, const std::string& prefix, int width, int mlp_ratio = 4);
Var ca_block(Tape& t, Binder& bind, const std::string& prefix, Var x, Var kv, int heads);

}  // namespace poseflow
