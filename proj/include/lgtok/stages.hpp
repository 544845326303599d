#pragma once

// Stage glue shared by the CLI and the acceptance driver.

#include <vector>

#include "lgtok/corpus.hpp"
#include "lgtok/sar.hpp"
#include "lgtok/tokenizer.hpp"

namespace lgtok::pipeline {

// Tokens of each record's caption-conditioned encoding.
model::TokenizedSplit tokenize_records(const model::Tokenizer& tok, const std::vector<const corpus::Record*>& records);

// kConfig when the corpus text width, channel count or frame range does not
// fit the tokenizer.
void check_corpus(const model::Tokenizer& tok, const corpus::Corpus& data);

// A SAR config built on `base` with vocabulary, schedule, text width and
// tokenizer hash taken from the tokenizer.
model::SarConfig sar_config_for(const model::Tokenizer& tok, model::SarConfig base);

}  // namespace lgtok::pipeline
