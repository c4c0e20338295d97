#include "xaichat/backends.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <map>
#include <random>
#include <set>

#include "xaichat/errors.hpp"
#include "xaichat/grammar.hpp"
#include "xaichat/text.hpp"

namespace xaichat {

std::string_view to_string(FinishReason r) {
  switch (r) {
    case FinishReason::Stop: return "stop";
    case FinishReason::Length: return "length";
    case FinishReason::Grammar: return "grammar";
  }
  return "stop";
}

FinishReason finish_reason_from_string(std::string_view s) {
  if (s == "stop") return FinishReason::Stop;
  if (s == "length") return FinishReason::Length;
  if (s == "grammar") return FinishReason::Grammar;
  throw Error(ErrorCode::InvalidArgument, "unknown finish_reason '" + std::string(s) + "'");
}

void check_request(const GenerationRequest& req) {
  if (req.max_new_tokens < 1) throw Error(ErrorCode::InvalidArgument, "max_new_tokens must be >= 1");
  if (!(req.temperature >= 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be >= 0");
}

std::string prompt_input(std::string_view prompt) {
  std::size_t best = std::string_view::npos;
  std::size_t pos = 0;
  while (pos <= prompt.size()) {
    const std::size_t eol = std::min(prompt.find('\n', pos), prompt.size());
    if (prompt.substr(pos, 6) == "Input:") best = pos + 6;
    pos = eol + 1;
  }
  if (best == std::string_view::npos) return {};
  const std::size_t end = std::min(prompt.find('\n', best), prompt.size());
  return text::trim(prompt.substr(best, end - best));
}

std::optional<std::string> demonstrated_output(std::string_view prompt) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= prompt.size()) {
    const std::size_t eol = std::min(prompt.find('\n', pos), prompt.size());
    lines.push_back(prompt.substr(pos, eol - pos));
    pos = eol + 1;
  }
  std::size_t last = lines.size();
  for (std::size_t i = lines.size(); i-- > 0;) {
    if (lines[i].substr(0, 6) == "Input:") {
      last = i;
      break;
    }
  }
  if (last == lines.size()) return std::nullopt;
  const std::string target = text::to_lower(text::trim(lines[last].substr(6)));
  for (std::size_t i = 0; i + 1 < last; ++i) {
    if (lines[i].substr(0, 6) != "Input:" || lines[i + 1].substr(0, 7) != "Output:") continue;
    if (text::to_lower(text::trim(lines[i].substr(6))) == target) return text::trim(lines[i + 1].substr(7));
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// MockGenerator
// ---------------------------------------------------------------------------

namespace {

std::shared_ptr<const Grammar> cached_grammar(const std::string& source) {
  static std::mutex mu;
  static std::map<std::string, std::shared_ptr<const Grammar>> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(source);
  if (it != cache.end()) return it->second;
  if (cache.size() > 64) cache.clear();
  auto g = std::make_shared<const Grammar>(FormalGrammar{source, "root"});
  cache.emplace(source, g);
  return g;
}

}  // namespace

MockGenerator::MockGenerator(bool supports_grammar, std::string backend_id)
    : supports_grammar_(supports_grammar), backend_id_(std::move(backend_id)) {}

std::shared_ptr<MockGenerator> MockGenerator::from_json(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(0, std::string("mock script: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaError(0, "mock script must be an object");
  auto mock = std::make_shared<MockGenerator>(doc.value("supports_grammar", true),
                                              doc.value("backend_id", std::string("mock")));
  mock->set_echo_demonstrations(doc.value("echo_demonstrations", false));
  const auto rules = doc.value("rules", nlohmann::json::array());
  for (std::size_t i = 0; i < rules.size(); ++i) {
    const auto& r = rules[i];
    if (!r.is_object() || !r.contains("completion") || !r["completion"].is_string()) {
      throw SchemaError(0, "mock rule " + std::to_string(i) + " needs a string 'completion'");
    }
    MockRule rule;
    rule.completion = r["completion"].get<std::string>();
    if (r.contains("when_prompt_contains")) rule.when_prompt_contains = r["when_prompt_contains"].get<std::string>();
    if (r.contains("when_input_matches")) rule.when_input_matches = r["when_input_matches"].get<std::string>();
    if (r.contains("when_input_equals")) rule.when_input_equals = r["when_input_equals"].get<std::string>();
    mock->add_rule(std::move(rule));
  }
  return mock;
}

std::shared_ptr<MockGenerator> MockGenerator::from_script(const std::string& path) {
  return from_json(text::read_file(path));
}

void MockGenerator::add_rule(MockRule rule) {
  CompiledRule compiled{std::move(rule), std::nullopt};
  if (compiled.rule.when_input_matches) {
    try {
      compiled.pattern.emplace(*compiled.rule.when_input_matches,
                               std::regex::ECMAScript | std::regex::icase);
    } catch (const std::regex_error& e) {
      throw Error(ErrorCode::InvalidArgument, "bad mock rule pattern: " + std::string(e.what()));
    }
  }
  if (compiled.rule.when_input_equals) {
    compiled.rule.when_input_equals = text::to_lower(text::trim(*compiled.rule.when_input_equals));
  }
  rules_.push_back(std::move(compiled));
}

void MockGenerator::set_handler(Handler handler) { handler_ = std::move(handler); }

std::optional<std::string> MockGenerator::lookup(const GenerationRequest& req) const {
  const std::string input = prompt_input(req.prompt);
  const std::string input_key = text::to_lower(input);
  for (const auto& c : rules_) {
    const auto& r = c.rule;
    if (r.when_prompt_contains && req.prompt.find(*r.when_prompt_contains) == std::string::npos) continue;
    if (r.when_input_equals && input_key != *r.when_input_equals) continue;
    if (c.pattern) {
      std::smatch m;
      if (!std::regex_match(input, m, *c.pattern)) continue;
      return m.format(r.completion);
    }
    return r.completion;
  }
  return std::nullopt;
}

GenerationResponse MockGenerator::generate(const GenerationRequest& req) {
  check_request(req);
  if (req.grammar && !supports_grammar_) {
    throw Error(ErrorCode::GrammarUnsupported, backend_id_ + " does not support grammars");
  }
  ++calls_;
  std::optional<std::string> scripted;
  if (handler_) scripted = handler_(req);
  if (!scripted) scripted = lookup(req);
  if (!scripted && echo_demos_) scripted = demonstrated_output(req.prompt);
  std::string out = scripted.value_or(std::string(kSentinel));

  GenerationResponse resp{"", FinishReason::Stop, backend_id_};
  std::size_t cut = out.size();
  for (const auto& stop : req.stop_sequences) {
    if (stop.empty()) continue;
    cut = std::min(cut, out.find(stop));
  }
  out.resize(cut);

  auto words = text::split_whitespace(out);
  if (words.size() > static_cast<std::size_t>(req.max_new_tokens)) {
    words.resize(static_cast<std::size_t>(req.max_new_tokens));
    out = text::join(words, " ");
    resp.finish_reason = FinishReason::Length;
  } else {
    out = text::trim(out);
  }

  if (req.grammar) {
    const auto grammar = cached_grammar(*req.grammar);
    if (!grammar->derives(out)) {
      std::mt19937_64 rng(text::fnv1a(req.prompt) ^ req.seed.value_or(0));
      out = grammar->sample(rng);
      resp.finish_reason = FinishReason::Grammar;
    }
  }
  resp.text = std::move(out);
  return resp;
}

// ---------------------------------------------------------------------------
// MockEmbedder / MockAttributor
// ---------------------------------------------------------------------------

EmbeddingVector MockEmbedder::embed_one(std::string_view text) {
  EmbeddingVector v;
  v.values.assign(kDim, 0.0);
  const std::string padded = " " + text::to_lower(text) + " ";
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    v.values[text::fnv1a(std::string_view(padded).substr(i, 3)) % kDim] += 1.0;
  }
  return v;
}

std::vector<EmbeddingVector> MockEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

AttributionResult MockAttributor::attribute(const std::string& input, const std::string& /*target*/,
                                            const std::string& method) {
  AttributionResult r;
  r.tokens = text::split_whitespace(input);
  r.scores.assign(r.tokens.size(), r.tokens.empty() ? 0.0 : 1.0 / static_cast<double>(r.tokens.size()));
  r.method = method;
  return r;
}

// ---------------------------------------------------------------------------
// Similarity
// ---------------------------------------------------------------------------

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "dimension " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double lexical_similarity(std::string_view a, std::string_view b) {
  const std::string la = text::to_lower(a);
  const std::string lb = text::to_lower(b);
  const auto ta = text::word_tokens(la);
  const auto tb = text::word_tokens(lb);
  const std::set<std::string> sa(ta.begin(), ta.end());
  const std::set<std::string> sb(tb.begin(), tb.end());
  double jaccard = 0;
  if (sa.empty() && sb.empty()) {
    jaccard = la == lb ? 1.0 : 0.0;
  } else {
    std::size_t inter = 0;
    for (const auto& t : sa) inter += sb.count(t);
    jaccard = static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
  }
  const std::size_t longest = std::max(la.size(), lb.size());
  const double edit =
      longest == 0 ? 1.0 : 1.0 - static_cast<double>(text::levenshtein(la, lb)) / static_cast<double>(longest);
  return 0.5 * jaccard + 0.5 * edit;
}

SimilarityService::SimilarityService(std::shared_ptr<EmbeddingBackend> embedder)
    : embedder_(std::move(embedder)) {}

std::optional<std::vector<EmbeddingVector>> SimilarityService::try_embed(
    const std::vector<std::string>& texts) {
  if (!embedder_) return std::nullopt;
  std::vector<EmbeddingVector> out(texts.size());
  std::vector<std::string> missing;
  std::vector<std::size_t> slots;
  {
    std::lock_guard lock(mu_);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      auto it = cache_.find(texts[i]);
      if (it != cache_.end()) {
        out[i] = it->second;
      } else {
        missing.push_back(texts[i]);
        slots.push_back(i);
      }
    }
  }
  if (!missing.empty()) {
    std::vector<EmbeddingVector> fresh;
    try {
      fresh = embedder_->embed(missing);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::BackendUnavailable || e.code() == ErrorCode::Timeout) return std::nullopt;
      throw;
    }
    if (fresh.size() != missing.size()) return std::nullopt;
    std::lock_guard lock(mu_);
    if (cache_.size() > 20000) cache_.clear();
    for (std::size_t k = 0; k < fresh.size(); ++k) {
      cache_[missing[k]] = fresh[k];
      out[slots[k]] = std::move(fresh[k]);
    }
  }
  return out;
}

double SimilarityService::similarity(const std::string& a, const std::string& b) {
  return similarities(a, {b}).front();
}

std::vector<double> SimilarityService::similarities(const std::string& query,
                                                    const std::vector<std::string>& candidates) {
  std::vector<std::string> all;
  all.reserve(candidates.size() + 1);
  all.push_back(query);
  all.insert(all.end(), candidates.begin(), candidates.end());
  std::vector<double> out;
  out.reserve(candidates.size());
  if (auto vecs = try_embed(all)) {
    fallback_ = false;
    for (std::size_t i = 1; i < vecs->size(); ++i) out.push_back(cosine((*vecs)[0], (*vecs)[i]));
    return out;
  }
  fallback_ = true;
  for (const auto& c : candidates) out.push_back(lexical_similarity(query, c));
  return out;
}

}  // namespace xaichat
