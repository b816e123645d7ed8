#include "refvos/text_encoder.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "refvos/rng.hpp"

namespace refvos {

namespace {

std::vector<std::string> tokenize(const std::string& expression) {
  std::vector<std::string> tokens;
  std::string cur;
  for (const char ch : expression) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    } else if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

Eigen::ArrayXd keyed_vector(std::uint64_t seed, std::string_view kind, std::uint64_t key, int d) {
  Rng rng(mix_seed(mix_seed(seed, hash_str(kind)), key));
  Eigen::ArrayXd v(d);
  for (int i = 0; i < d; ++i) v[i] = rng.normal();
  return v;
}

}  // namespace

TextEmbedding encode_expression(const std::string& expression, int d, std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("encode_expression: d must be positive");
  const auto tokens = tokenize(expression);
  if (tokens.empty())
    throw std::invalid_argument("encode_expression: expression is empty after trimming");

  Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(d);
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    const Eigen::ArrayXd h = keyed_vector(seed, "token", hash_str(tokens[p]), d);
    const Eigen::ArrayXd r = keyed_vector(seed, "pos", p, d);
    acc += h * r;
  }
  const double norm = std::sqrt((acc * acc).sum());
  if (norm < 1e-12) {
    // Degenerate cancellation; fall back to a sentence-level keyed direction.
    acc = keyed_vector(seed, "sentence", hash_str(expression), d);
  }
  acc /= std::sqrt((acc * acc).sum());
  return TextEmbedding{std::move(acc), TextSource::toy_hash};
}

TextEmbedding encode_with_external(const ExternalEncoder& encoder, const std::string& expression,
                                   int d) {
  if (!encoder) throw std::invalid_argument("encode_with_external: encoder not set");
  Eigen::ArrayXd v = encoder(expression);
  if (v.size() != d)
    throw std::invalid_argument("encode_with_external: adapter returned wrong dimension");
  const double norm = std::sqrt((v * v).sum());
  if (norm < 1e-12)
    throw std::invalid_argument("encode_with_external: adapter returned a zero vector");
  v /= norm;
  return TextEmbedding{std::move(v), TextSource::external};
}

}  // namespace refvos
