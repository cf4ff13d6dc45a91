#include "qattack/extraction.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

#include "json.hpp"
#include "qattack/metrics.hpp"
#include "qattack/parallel.hpp"

namespace qattack {

std::string to_string(ExtractionScheme scheme) {
  return scheme == ExtractionScheme::kWiki ? "wiki" : "random";
}

ExtractionScheme parse_scheme(std::string_view name) {
  const std::string low = lowercase(name);
  if (low == "wiki") return ExtractionScheme::kWiki;
  if (low == "random") return ExtractionScheme::kRandom;
  throw Error(ErrorKind::kValidation, "unknown extraction scheme '" + std::string(name) + "'");
}

TokenizedText gen_context(ExtractionScheme scheme, const CorpusStore& corpus, Rng& rng,
                          LengthRange random_length) {
  if (corpus.paragraphs.empty() || corpus.token_pool.empty()) {
    throw Error(ErrorKind::kValidation, "corpus is empty");
  }
  if (scheme == ExtractionScheme::kWiki) {
    return corpus.paragraphs[uniform_index(rng, corpus.paragraphs.size())];
  }
  if (random_length.first < 1 || random_length.first > random_length.second) {
    throw Error(ErrorKind::kValidation, "invalid random context length range");
  }
  const size_t n = std::uniform_int_distribution<size_t>(random_length.first,
                                                         random_length.second)(rng);
  std::vector<std::string> tokens;
  tokens.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    tokens.push_back(corpus.token_pool[uniform_index(rng, corpus.token_pool.size())]);
  }
  return join_tokens(tokens);
}

TokenizedText gen_query(const TokenizedText& context, Rng& rng, LengthRange query_length) {
  if (query_length.first < 1 || query_length.first > query_length.second) {
    throw Error(ErrorKind::kValidation, "invalid query length range");
  }
  if (context.size() < query_length.first) {
    throw Error(ErrorKind::kValidation, "context has " + std::to_string(context.size()) +
                                            " tokens, query needs at least " +
                                            std::to_string(query_length.first));
  }
  size_t n = std::uniform_int_distribution<size_t>(query_length.first, query_length.second)(rng);
  n = std::min(n, context.size());

  // Partial Fisher-Yates: the first n entries are a uniform sample without
  // replacement, in sampled order.
  std::vector<size_t> idx(context.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (size_t i = 0; i < n; ++i) {
    const size_t j = i + uniform_index(rng, idx.size() - i);
    std::swap(idx[i], idx[j]);
  }

  std::string wh(kQuestionWords[uniform_index(rng, std::size(kQuestionWords))]);
  wh[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(wh[0])));
  std::vector<std::string> tokens{wh};
  for (size_t i = 0; i < n; ++i) tokens.push_back(context.tokens[idx[i]]);
  tokens.emplace_back("?");
  return join_tokens(tokens);
}

ExtractionDataset build_dataset(ExtractionScheme scheme, const SpanModel& victim,
                                const CorpusStore& corpus, size_t budget,
                                const ExtractionConfig& config, uint64_t seed) {
  if (budget < 1) throw Error(ErrorKind::kValidation, "extraction budget must be >= 1");
  const size_t batch = std::max<size_t>(1, config.label_batch);

  // Generation is sequential so the dataset only depends on the seed.
  Rng rng(seed);
  std::vector<TokenizedText> contexts, queries;
  contexts.reserve(budget);
  queries.reserve(budget);
  for (size_t i = 0; i < budget; ++i) {
    contexts.push_back(gen_context(scheme, corpus, rng, config.random_context_length));
    queries.push_back(gen_query(contexts.back(), rng, config.query_length));
  }

  CountingModel counted(victim);
  const size_t num_batches = (budget + batch - 1) / batch;
  std::vector<std::vector<SpanDistribution>> labels(num_batches);
  std::vector<char> done(num_batches, 0);
  std::optional<Error> failure;
  try {
    parallel_for(num_batches, config.workers, [&](size_t b) {
      const size_t begin = b * batch, end = std::min(budget, begin + batch);
      std::vector<PredictItem> items;
      for (size_t i = begin; i < end; ++i) items.push_back({&queries[i], &contexts[i]});
      labels[b] = predict_batch(counted, items, 1);
      done[b] = 1;
    });
  } catch (const Error& e) {
    failure = e;
  }

  ExtractionDataset ds;
  ds.scheme = scheme;
  ds.seed = seed;
  ds.budget = budget;
  for (size_t b = 0; b < num_batches && done[b]; ++b) {
    for (size_t j = 0; j < labels[b].size(); ++j) {
      const size_t i = b * batch + j;
      const auto& top = labels[b][j].top();
      if (normalize_answer(top.text).empty()) continue;
      SynthesizedExample ex;
      ex.query = queries[i];
      ex.context = contexts[i];
      ex.victim_answer = {top.text, contexts[i].offsets[top.start_token].first};
      ex.victim_probability = top.probability;
      ds.examples.push_back(std::move(ex));
    }
  }
  ds.queries_spent = counted.calls();
  if (failure) throw ExtractionAborted(*failure, std::move(ds));
  return ds;
}

std::vector<LabeledQuery> to_labeled(std::span<const SynthesizedExample> examples) {
  std::vector<LabeledQuery> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back({ex.query, ex.context, ex.victim_answer});
  return out;
}

size_t heldout_begin(size_t n) {
  if (n == 0) return 0;
  const size_t held = std::max<size_t>(1, n / 10);
  return n - held;
}

SurrogateModel train_extracted(const ExtractionDataset& dataset, const TrainingHyper& hyper) {
  const std::span<const SynthesizedExample> all(dataset.examples);
  const auto labeled = to_labeled(all.first(heldout_begin(all.size())));
  SurrogateModel model = surrogate_train(std::span<const LabeledQuery>(labeled), hyper);
  model.training_meta.scheme = to_string(dataset.scheme);
  model.training_meta.seed = hyper.seed;
  return model;
}

double label_agreement(const SpanModel& model, std::span<const SynthesizedExample> examples) {
  if (examples.empty()) return 0.0;
  size_t agree = 0;
  for (const auto& ex : examples) {
    const auto dist = predict(model, ex.query, ex.context, 1);
    const std::string gold[] = {ex.victim_answer.text};
    if (exact_match(dist.top().text, gold)) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(examples.size());
}

std::string serialize_dataset(const ExtractionDataset& dataset, const Provenance* provenance) {
  std::ostringstream out;
  nlohmann::ordered_json header = {{"format", "qattack-extraction"},
                                   {"scheme", to_string(dataset.scheme)},
                                   {"seed", dataset.seed},
                                   {"budget", dataset.budget},
                                   {"queries_spent", dataset.queries_spent},
                                   {"examples", dataset.examples.size()}};
  if (provenance) {
    header["config_hash"] = provenance->config_hash;
    header["run_seed"] = provenance->seed;
  }
  out << header.dump() << "\n";
  for (const auto& ex : dataset.examples) {
    nlohmann::ordered_json rec = {
        {"query", ex.query.raw},
        {"context", ex.context.raw},
        {"answer", ex.victim_answer.text},
        {"char_start", byte_to_codepoint(ex.context.raw, ex.victim_answer.char_start)},
        {"probability", ex.victim_probability}};
    out << rec.dump() << "\n";
  }
  return out.str();
}

ExtractionDataset parse_dataset(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  ExtractionDataset ds;
  if (!std::getline(in, line)) throw Error(ErrorKind::kParse, "extraction file is empty");
  auto header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != "qattack-extraction") {
    throw Error(ErrorKind::kParse, "extraction file: bad header line");
  }
  ds.scheme = parse_scheme(header.value("scheme", ""));
  ds.seed = header.value("seed", uint64_t{0});
  ds.budget = header.value("budget", size_t{0});
  ds.queries_spent = header.value("queries_spent", size_t{0});
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto rec = nlohmann::json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.contains("query") || !rec.contains("context") ||
        !rec.contains("answer") || !rec.contains("char_start")) {
      throw Error(ErrorKind::kParse, "extraction file line " + std::to_string(lineno) +
                                         ": malformed record");
    }
    SynthesizedExample ex;
    ex.query = tokenize(rec["query"].get<std::string>());
    ex.context = tokenize(rec["context"].get<std::string>());
    ex.victim_answer.text = rec["answer"].get<std::string>();
    ex.victim_answer.char_start =
        codepoint_to_byte(ex.context.raw, rec["char_start"].get<size_t>());
    ex.victim_probability = rec.value("probability", 0.0);
    if (!answer_matches(ex.context, ex.victim_answer)) {
      throw Error(ErrorKind::kParse, "extraction file line " + std::to_string(lineno) +
                                         ": answer not found at char_start");
    }
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

void save_dataset(const ExtractionDataset& dataset, const std::filesystem::path& path,
                  const Provenance* provenance) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << serialize_dataset(dataset, provenance);
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path.string());
}

ExtractionDataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset(read_file(path));
}

}  // namespace qattack
