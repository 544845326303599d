#include <cctype>
#include <map>
#include <mutex>
#include <random>
#include <sstream>

#include "lgtok/corpus.hpp"

namespace lgtok::corpus {

namespace {

constexpr std::uint64_t kTableSeed = 0x4c47546f6b54787aULL;

const nn::Tensor& embedding_table(std::size_t d_text) {
  static std::mutex mu;
  static std::map<std::size_t, nn::Tensor> tables;
  std::lock_guard lock(mu);
  auto it = tables.find(d_text);
  if (it == tables.end()) {
    nn::Tensor t = nn::Tensor::matrix(kEmbeddingRows, d_text);
    std::mt19937_64 rng(kTableSeed);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    for (float& v : t.values()) v = normal(rng);
    it = tables.emplace(d_text, std::move(t)).first;
  }
  return it->second;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::string> tokenize_caption(std::string_view caption) {
  std::istringstream in{std::string(caption)};
  std::vector<std::string> tokens;
  std::string word;
  while (in >> word) {
    for (char& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    tokens.push_back(std::move(word));
  }
  return tokens;
}

TextContext embed_text(std::string_view caption, std::size_t d_text) {
  std::vector<std::string> tokens = tokenize_caption(caption);
  if (tokens.empty()) return TextContext::empty();
  if (tokens.size() > kMaxTextTokens) tokens.resize(kMaxTextTokens);
  const nn::Tensor& table = embedding_table(d_text);
  TextContext ctx;
  ctx.is_empty = false;
  ctx.embeddings = nn::Tensor::matrix(tokens.size(), d_text);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::size_t row = fnv1a64(tokens[i]) % kEmbeddingRows;
    const auto src = table.row(row);
    std::copy(src.begin(), src.end(), ctx.embeddings.row(i).begin());
  }
  return ctx;
}

}  // namespace lgtok::corpus
