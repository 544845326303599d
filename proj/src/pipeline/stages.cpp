#include "lgtok/stages.hpp"

#include "lgtok/error.hpp"

namespace lgtok::pipeline {

model::TokenizedSplit tokenize_records(const model::Tokenizer& tok,
                                       const std::vector<const corpus::Record*>& records) {
  model::TokenizedSplit out;
  out.tokens.reserve(records.size());
  for (const corpus::Record* r : records) {
    const nn::Tensor z = model::tokenize(tok, r->features, r->text);
    out.tokens.push_back(quant::multiscale_quantize(z, tok.config.schedule, tok.quantizer).tokens);
    out.texts.push_back(&r->text);
  }
  return out;
}

void check_corpus(const model::Tokenizer& tok, const corpus::Corpus& data) {
  const auto& m = data.manifest;
  if (m.d_text != tok.config.d_text)
    fail(ErrorKind::kConfig, "corpus text width " + std::to_string(m.d_text) + " differs from the tokenizer's " +
                                 std::to_string(tok.config.d_text));
  if (m.channels != tok.config.channels)
    fail(ErrorKind::kConfig, "corpus has " + std::to_string(m.channels) + " channels, the tokenizer expects " +
                                 std::to_string(tok.config.channels));
  if (m.frames_max > tok.config.max_frames)
    fail(ErrorKind::kConfig, "corpus frames reach " + std::to_string(m.frames_max) + " but the tokenizer stops at " +
                                 std::to_string(tok.config.max_frames));
}

model::SarConfig sar_config_for(const model::Tokenizer& tok, model::SarConfig base) {
  base.vocabulary = tok.config.vocabulary;
  base.schedule = tok.config.schedule;
  base.d_text = tok.config.d_text;
  base.tokenizer_hash = tok.config.hash();
  base.validate();
  return base;
}

}  // namespace lgtok::pipeline
