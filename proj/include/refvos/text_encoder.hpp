#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>

namespace refvos {

enum class TextSource { toy_hash, external };

struct TextEmbedding {
  Eigen::ArrayXd vector;  // length d, unit Euclidean norm
  TextSource source = TextSource::toy_hash;
};

// Frozen deterministic sentence encoder: lowercase, split on non-alphanumerics,
// token t at position p contributes h(t) ⊙ r(p) where h and r are seed-keyed
// pseudo-random vectors; the sum is L2-normalized. Order-aware by construction
// ("A moves to B" differs from "B moves to A"), carries no trainable state.
TextEmbedding encode_expression(const std::string& expression, int d, std::uint64_t seed);

// Adapter hook for a real pretrained encoder (string -> [d] vector). The
// adapter decides its own pooling; the output is L2-normalized here. Nothing
// in the pipeline or tests depends on any particular adapter.
using ExternalEncoder = std::function<Eigen::ArrayXd(const std::string&)>;
TextEmbedding encode_with_external(const ExternalEncoder& encoder, const std::string& expression,
                                   int d);

}  // namespace refvos
