#include "xaichat/datastore.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "xaichat/backends.hpp"
#include "xaichat/errors.hpp"
#include "xaichat/text.hpp"

namespace xaichat {

using nlohmann::json;

// English stopword list (100 entries).
constexpr std::string_view kStopwords[] = {
    "a", "about", "after", "against", "all", "am", "an", "and", "any", "are", "as", "at", "be",
    "because", "been", "before", "being", "between", "both", "but", "by", "can", "could", "did", "do",
    "does", "down", "during", "each", "few", "for", "from", "had", "has", "have", "he", "her", "here",
    "him", "his", "how", "i", "if", "in", "into", "is", "it", "its", "just", "me", "more", "most", "my",
    "no", "not", "of", "on", "only", "or", "other", "our", "out", "over", "she", "should", "so", "some",
    "such", "than", "that", "the", "their", "them", "then", "there", "these", "they", "this", "those",
    "through", "to", "too", "under", "up", "very", "was", "we", "were", "what", "when", "where",
    "which", "while", "who", "why", "will", "with", "would", "you", "your"};
static_assert(std::size(kStopwords) == 100);

namespace {

const std::vector<std::string> kFactLabels{"SUPPORT", "REFUTE"};
const std::vector<std::string> kChoiceLetters{"A", "B", "C", "D", "E"};
constexpr std::size_t kChoiceCount = 5;
constexpr std::size_t kShowTextLimit = 240;

std::string clip(const std::string& s, std::size_t limit) {
  if (s.size() <= limit) return s;
  return s.substr(0, limit) + "...";
}

std::string required_string(const json& row, const char* key, std::size_t line) {
  if (!row.contains(key) || !row[key].is_string()) {
    throw SchemaError(line, std::string("missing string field '") + key + "'");
  }
  std::string v = row[key].get<std::string>();
  if (text::trim(v).empty()) throw SchemaError(line, std::string("field '") + key + "' is empty");
  return v;
}

// Parses everything except id/label; used for dataset rows and custom inputs alike.
Instance parse_fields(const json& row, Task task, std::size_t line) {
  if (!row.is_object()) throw SchemaError(line, "row is not a JSON object");
  Instance inst;
  if (task == Task::FactChecking) {
    inst.fields.emplace_back("claim", required_string(row, "claim", line));
    std::string evidence;
    if (row.contains("evidence")) {
      if (!row["evidence"].is_string()) throw SchemaError(line, "field 'evidence' must be a string");
      evidence = row["evidence"].get<std::string>();
    }
    inst.fields.emplace_back("evidence", evidence);
  } else {
    inst.fields.emplace_back("question", required_string(row, "question", line));
    if (!row.contains("choices") || !row["choices"].is_array() || row["choices"].size() != kChoiceCount) {
      throw SchemaError(line, "field 'choices' must be an array of 5 strings");
    }
    for (const auto& c : row["choices"]) {
      if (!c.is_string()) throw SchemaError(line, "field 'choices' must be an array of 5 strings");
      inst.choices.push_back(c.get<std::string>());
    }
    for (const char* key : {"positive_explanation", "negative_explanation"}) {
      if (row.contains(key)) {
        if (!row[key].is_string()) throw SchemaError(line, std::string("field '") + key + "' must be a string");
        inst.fields.emplace_back(key, row[key].get<std::string>());
      }
    }
  }
  return inst;
}

std::optional<int> parse_label(const json& value, const Dataset& ds, const Instance& inst, std::size_t line) {
  if (value.is_number_integer()) {
    const auto idx = value.get<std::int64_t>();
    if (idx < 0 || idx >= static_cast<std::int64_t>(ds.label_names.size())) {
      throw SchemaError(line, "label index " + std::to_string(idx) + " out of range");
    }
    return static_cast<int>(idx);
  }
  if (value.is_string()) {
    const std::string name = value.get<std::string>();
    if (auto idx = ds.label_index(name)) return idx;
    for (std::size_t i = 0; i < inst.choices.size(); ++i) {
      if (text::to_lower(text::trim(inst.choices[i])) == text::to_lower(text::trim(name))) {
        return static_cast<int>(i);
      }
    }
    throw SchemaError(line, "unknown label '" + name + "'");
  }
  throw SchemaError(line, "label must be a string or an integer index");
}

void append_line(const std::string& path, const std::string& line) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot append to " + path);
  out << line << '\n';
}

}  // namespace

std::string_view to_string(Task t) {
  return t == Task::FactChecking ? "fact_checking" : "commonsense_qa";
}

Task task_from_string(std::string_view s) {
  if (s == "fact_checking") return Task::FactChecking;
  if (s == "commonsense_qa") return Task::CommonsenseQA;
  throw Error(ErrorCode::InvalidArgument, "unknown task '" + std::string(s) + "'");
}

const std::string* Instance::field(std::string_view name) const {
  for (const auto& [k, v] : fields) {
    if (k == name) return &v;
  }
  return nullptr;
}

const std::string& Instance::primary_text() const { return fields.front().second; }

std::string Instance::searchable_text() const {
  std::vector<std::string> parts;
  for (const auto& [_, v] : fields) parts.push_back(v);
  for (const auto& c : choices) parts.push_back(c);
  return text::join(parts, " ");
}

std::string Dataset::label_name(std::optional<int> label) const {
  if (!label || *label < 0 || *label >= static_cast<int>(label_names.size())) return "unknown";
  return label_names[static_cast<std::size_t>(*label)];
}

std::optional<int> Dataset::label_index(std::string_view name) const {
  const std::string key = text::to_lower(text::trim(name));
  for (std::size_t i = 0; i < label_names.size(); ++i) {
    if (text::to_lower(label_names[i]) == key) return static_cast<int>(i);
  }
  return std::nullopt;
}

Dataset parse_dataset(std::string_view jsonl, const std::string& name) {
  Dataset ds;
  ds.name = name;
  std::optional<Task> task;
  std::istringstream in{std::string(jsonl)};
  std::string raw;
  std::size_t line = 0;
  std::set<std::int64_t> seen;
  struct Row {
    json doc;
    std::size_t line;
  };
  std::vector<Row> rows;
  while (std::getline(in, raw)) {
    ++line;
    if (text::trim(raw).empty()) continue;
    json doc;
    try {
      doc = json::parse(raw);
    } catch (const json::exception&) {
      throw SchemaError(line, "invalid JSON");
    }
    if (doc.is_object() && doc.contains("_meta")) {
      if (!rows.empty()) throw SchemaError(line, "_meta header must be the first line");
      const auto& meta = doc["_meta"];
      if (!meta.is_object()) throw SchemaError(line, "_meta must be an object");
      if (meta.contains("name")) ds.name = meta["name"].get<std::string>();
      if (meta.contains("description")) ds.description = meta["description"].get<std::string>();
      if (meta.contains("task")) {
        try {
          task = task_from_string(meta["task"].get<std::string>());
        } catch (const Error&) {
          throw SchemaError(line, "unknown task");
        }
      }
      if (meta.contains("labels")) {
        if (!meta["labels"].is_array() || meta["labels"].empty()) throw SchemaError(line, "labels must be a non-empty array");
        for (const auto& l : meta["labels"]) ds.label_names.push_back(l.get<std::string>());
      }
      continue;
    }
    rows.push_back({std::move(doc), line});
  }
  if (rows.empty()) throw Error(ErrorCode::EmptyDataset, "dataset '" + ds.name + "' has no instances");
  if (!task) {
    const auto& first = rows.front().doc;
    if (first.is_object() && first.contains("claim")) {
      task = Task::FactChecking;
    } else if (first.is_object() && first.contains("question")) {
      task = Task::CommonsenseQA;
    } else {
      throw SchemaError(rows.front().line, "cannot infer task: no 'claim' or 'question' field");
    }
  }
  ds.task = *task;
  if (ds.label_names.empty()) ds.label_names = ds.task == Task::FactChecking ? kFactLabels : kChoiceLetters;

  for (const auto& [doc, row_line] : rows) {
    Instance inst = parse_fields(doc, ds.task, row_line);
    if (!doc.contains("id") || !doc["id"].is_number_integer() || doc["id"].get<std::int64_t>() < 0) {
      throw SchemaError(row_line, "missing non-negative integer 'id'");
    }
    inst.id = doc["id"].get<std::int64_t>();
    if (!seen.insert(inst.id).second) throw SchemaError(row_line, "duplicate id " + std::to_string(inst.id));
    if (!doc.contains("label")) throw SchemaError(row_line, "missing 'label'");
    inst.gold_label = parse_label(doc["label"], ds, inst, row_line);
    ds.instances.push_back(std::move(inst));
  }
  std::sort(ds.instances.begin(), ds.instances.end(), [](const Instance& a, const Instance& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < ds.instances.size(); ++i) {
    if (ds.instances[i].id != static_cast<std::int64_t>(i)) {
      throw SchemaError(0, "ids must be dense 0.." + std::to_string(ds.instances.size() - 1) + "; missing id " +
                               std::to_string(i));
    }
  }
  return ds;
}

Dataset load_dataset(const std::string& path) {
  std::string stem = path;
  if (auto slash = stem.find_last_of('/'); slash != std::string::npos) stem = stem.substr(slash + 1);
  if (auto dot = stem.find('.'); dot != std::string::npos) stem = stem.substr(0, dot);
  std::string content;
  try {
    content = text::read_file(path);
  } catch (const Error& e) {
    throw SchemaError(0, e.what());
  }
  return parse_dataset(content, stem);
}

std::string instance_prompt_text(const Dataset& ds, const Instance& inst) {
  if (ds.task == Task::FactChecking) {
    std::string out = "Claim: " + inst.primary_text();
    const auto* ev = inst.field("evidence");
    if (ev != nullptr && !ev->empty()) out += "\nEvidence: " + *ev;
    return out;
  }
  std::string out = "Question: " + inst.primary_text() + "\nChoices:";
  for (std::size_t i = 0; i < inst.choices.size(); ++i) {
    out += " (" + kChoiceLetters[i] + ") " + inst.choices[i];
  }
  return out;
}

nlohmann::ordered_json instance_json(const Dataset& ds, const Instance& inst) {
  nlohmann::ordered_json j;
  j["id"] = inst.id;
  for (const auto& [k, v] : inst.fields) j[k] = v;
  if (!inst.choices.empty()) j["choices"] = inst.choices;
  j["label"] = inst.gold_label ? nlohmann::ordered_json(ds.label_name(inst.gold_label)) : nlohmann::ordered_json();
  j["source"] = inst.source == Source::Dataset ? "dataset" : "custom_input";
  return j;
}

// ---------------------------------------------------------------------------
// DataStore
// ---------------------------------------------------------------------------

DataStore::DataStore(std::shared_ptr<const Dataset> dataset) : dataset_(std::move(dataset)) {
  if (!dataset_ || dataset_->instances.empty()) throw Error(ErrorCode::EmptyDataset, "datastore needs a dataset");
}

std::vector<std::int64_t> DataStore::custom_input_ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::int64_t> out;
  for (const auto& c : custom_) out.push_back(c.id);
  return out;
}

bool DataStore::contains(std::int64_t id) const {
  if (id >= 0 && id < dataset_size()) return true;
  std::lock_guard lock(mu_);
  const auto k = id - dataset_size();
  return k >= 0 && k < static_cast<std::int64_t>(custom_.size());
}

const Instance& DataStore::get(std::int64_t id) const {
  if (id >= 0 && id < dataset_size()) return dataset_->instances[static_cast<std::size_t>(id)];
  std::lock_guard lock(mu_);
  const auto k = id - dataset_size();
  if (k < 0 || k >= static_cast<std::int64_t>(custom_.size())) {
    throw Error(ErrorCode::IdNotFound, "no instance with id " + std::to_string(id));
  }
  return custom_[static_cast<std::size_t>(k)];
}

std::vector<const Instance*> DataStore::all() const {
  std::vector<const Instance*> out;
  out.reserve(dataset_->instances.size());
  for (const auto& inst : dataset_->instances) out.push_back(&inst);
  return out;
}

std::vector<const Instance*> DataStore::filter(const std::vector<FilterNode>& filters, Connective connective) const {
  if (filters.empty()) return all();
  std::optional<std::set<std::int64_t>> acc;
  for (const auto& f : filters) {
    std::set<std::int64_t> hit;
    if (const auto* by_id = std::get_if<ById>(&f)) {
      (void)get(by_id->id);
      hit.insert(by_id->id);
    } else {
      const std::string needle = text::to_lower(text::trim(std::get<Includes>(f).token));
      const auto needle_tokens = text::word_tokens(needle);
      for (const auto& inst : dataset_->instances) {
        const auto toks = text::word_tokens(inst.searchable_text());
        if (needle_tokens.empty()) continue;
        auto it = std::search(toks.begin(), toks.end(), needle_tokens.begin(), needle_tokens.end());
        if (it != toks.end()) hit.insert(inst.id);
      }
    }
    if (!acc) {
      acc = std::move(hit);
    } else if (connective == Connective::Or) {
      acc->insert(hit.begin(), hit.end());
    } else {
      std::set<std::int64_t> both;
      std::set_intersection(acc->begin(), acc->end(), hit.begin(), hit.end(), std::inserter(both, both.end()));
      acc = std::move(both);
    }
  }
  std::vector<const Instance*> out;
  for (auto id : *acc) out.push_back(&get(id));
  return out;
}

const Instance& DataStore::add_custom_input(const json& fields) {
  Instance inst = parse_fields(fields, dataset_->task, 0);
  inst.source = Source::CustomInput;
  if (fields.contains("label") && !fields["label"].is_null()) {
    inst.gold_label = parse_label(fields["label"], *dataset_, inst, 0);
  }
  json record = fields;
  record.erase("id");
  std::lock_guard lock(mu_);
  inst.id = dataset_size() + static_cast<std::int64_t>(custom_.size());
  record["id"] = inst.id;
  custom_.push_back(std::move(inst));
  history_.push_back(record);
  if (!history_file_.empty()) append_line(history_file_, record.dump());
  return custom_.back();
}

std::vector<json> DataStore::custom_input_history() const {
  std::lock_guard lock(mu_);
  return history_;
}

void DataStore::set_history_file(std::string path) {
  std::lock_guard lock(mu_);
  history_file_ = std::move(path);
}

void DataStore::replay_history(const std::string& path) {
  std::ifstream in(path);
  if (!in) return;
  std::string raw;
  std::size_t line = 0;
  std::string saved;
  {
    std::lock_guard lock(mu_);
    saved = std::exchange(history_file_, std::string());
  }
  while (std::getline(in, raw)) {
    ++line;
    if (text::trim(raw).empty()) continue;
    json doc = json::parse(raw, nullptr, false);
    if (doc.is_discarded()) throw SchemaError(line, "invalid JSON in custom input history");
    const auto& inst = add_custom_input(doc);
    if (doc.contains("id") && doc["id"] != inst.id) {
      throw SchemaError(line, "custom input history is out of order");
    }
  }
  std::lock_guard lock(mu_);
  history_file_ = saved;
}

// ---------------------------------------------------------------------------
// Data operations
// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, std::int64_t>> label_distribution(const Dataset& ds,
                                                                     const std::vector<const Instance*>& subset) {
  std::vector<std::pair<std::string, std::int64_t>> out;
  out.reserve(ds.label_names.size());
  for (const auto& name : ds.label_names) out.emplace_back(name, 0);
  std::int64_t unlabeled = 0;
  for (const auto* inst : subset) {
    if (inst->gold_label && *inst->gold_label >= 0 && *inst->gold_label < static_cast<int>(out.size())) {
      ++out[static_cast<std::size_t>(*inst->gold_label)].second;
    } else {
      ++unlabeled;
    }
  }
  if (unlabeled > 0) out.emplace_back("unlabeled", unlabeled);
  return out;
}

std::int64_t countdata(const std::vector<const Instance*>& subset) noexcept {
  return static_cast<std::int64_t>(subset.size());
}

std::string show(const Dataset& ds, const std::vector<const Instance*>& subset, std::size_t offset) {
  if (subset.empty()) return "(no instances)";
  std::ostringstream out;
  const std::size_t end = std::min(subset.size(), offset + kShowPageSize);
  for (std::size_t i = offset; i < end; ++i) {
    const Instance& inst = *subset[i];
    if (i != offset) out << "\n";
    out << "[" << inst.id << "]";
    if (inst.source == Source::CustomInput) out << " (custom input)";
    out << " gold: " << ds.label_name(inst.gold_label);
    for (const auto& [k, v] : inst.fields) {
      if (v.empty()) continue;
      out << "\n  " << k << ": " << clip(v, kShowTextLimit);
    }
    for (std::size_t c = 0; c < inst.choices.size(); ++c) {
      out << "\n  (" << kChoiceLetters[c] << ") " << inst.choices[c];
    }
  }
  if (end < subset.size()) {
    out << "\n... " << (subset.size() - end) << " more instance(s) not shown";
  }
  return out.str();
}

bool is_stopword(std::string_view token) {
  return std::find(std::begin(kStopwords), std::end(kStopwords), token) != std::end(kStopwords);
}

std::vector<std::pair<std::string, std::int64_t>> keywords(const std::vector<const Instance*>& subset,
                                                           std::size_t k) {
  std::map<std::string, std::int64_t> counts;
  for (const auto* inst : subset) {
    for (const auto& tok : text::word_tokens(inst->searchable_text())) {
      if (!is_stopword(tok)) ++counts[tok];
    }
  }
  std::vector<std::pair<std::string, std::int64_t>> out(counts.begin(), counts.end());
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (out.size() > k) out.resize(k);
  return out;
}

std::vector<std::pair<const Instance*, double>> similar_topk(const DataStore& store, const Instance& anchor,
                                                             std::size_t k, SimilarityService& sim) {
  std::vector<const Instance*> pool;
  std::vector<std::string> texts;
  for (const auto* inst : store.all()) {
    if (inst->id == anchor.id) continue;
    pool.push_back(inst);
    texts.push_back(instance_prompt_text(store.dataset(), *inst));
  }
  const auto scores = sim.similarities(instance_prompt_text(store.dataset(), anchor), texts);
  std::vector<std::pair<const Instance*, double>> out;
  for (std::size_t i = 0; i < pool.size(); ++i) out.emplace_back(pool[i], scores[i]);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (out.size() > k) out.resize(k);
  return out;
}

// ---------------------------------------------------------------------------
// PredictionCache
// ---------------------------------------------------------------------------

std::optional<CachedPrediction> PredictionCache::get(std::int64_t id) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(id);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

CachedPrediction PredictionCache::insert_or_get(std::int64_t id, CachedPrediction p) {
  std::lock_guard lock(mu_);
  return entries_.try_emplace(id, std::move(p)).first->second;
}

std::size_t PredictionCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

void PredictionCache::clear() {
  std::lock_guard lock(mu_);
  entries_.clear();
}

}  // namespace xaichat
