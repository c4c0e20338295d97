#include "xaichat/catalog.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

#include "xaichat/errors.hpp"

namespace xaichat {

std::string_view to_string(Category c) {
  switch (c) {
    case Category::Filter: return "Filter";
    case Category::Prediction: return "Prediction";
    case Category::Data: return "Data";
    case Category::Meta: return "Meta";
    case Category::About: return "About";
    case Category::Explain: return "Explain";
    case Category::NLU: return "NLU";
    case Category::Perturbation: return "Perturbation";
    case Category::Logic: return "Logic";
  }
  return "?";
}

std::string_view to_string(AttrKind k) {
  switch (k) {
    case AttrKind::InstanceId: return "InstanceId";
    case AttrKind::Count: return "Count";
    case AttrKind::TopK: return "TopK";
    case AttrKind::Token: return "Token";
    case AttrKind::MethodName: return "MethodName";
    case AttrKind::Metric: return "Metric";
    case AttrKind::MistakeMode: return "MistakeMode";
    case AttrKind::OpName: return "OpName";
    case AttrKind::ExpertiseLevel: return "ExpertiseLevel";
  }
  return "?";
}

std::string attr_value_string(const AttrValue& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  return std::get<std::string>(v);
}

const std::vector<std::string>& enum_values(AttrKind kind) {
  static const std::vector<std::string> methods(std::begin(kAttributionMethods),
                                                std::end(kAttributionMethods));
  static const std::vector<std::string> metrics(std::begin(kMetrics), std::end(kMetrics));
  static const std::vector<std::string> modes{"show", "count"};
  static const std::vector<std::string> levels{"beginner", "intermediate", "expert"};
  static const std::vector<std::string> none;
  switch (kind) {
    case AttrKind::MethodName: return methods;
    case AttrKind::Metric: return metrics;
    case AttrKind::MistakeMode: return modes;
    case AttrKind::ExpertiseLevel: return levels;
    default: return none;
  }
}

Catalog::Catalog(std::vector<OperationSpec> specs) : specs_(std::move(specs)) {
  std::set<std::string> names;
  for (const auto& spec : specs_) {
    if (spec.name.empty()) throw Error(ErrorCode::InvalidArgument, "operation with empty name");
    if (!names.insert(spec.name).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate operation name: " + spec.name);
    }
    for (const auto& attr : spec.attributes) {
      if (attr.required == attr.default_value.has_value()) {
        throw Error(ErrorCode::InvalidArgument,
                    spec.name + "." + attr.name +
                        ": optional attributes need a default, required ones must not have one");
      }
    }
  }
}

const OperationSpec* Catalog::find(std::string_view name) const noexcept {
  auto it = std::find_if(specs_.begin(), specs_.end(),
                         [&](const OperationSpec& s) { return s.name == name; });
  return it == specs_.end() ? nullptr : &*it;
}

const OperationSpec& Catalog::lookup(std::string_view name) const {
  if (const auto* spec = find(name)) return *spec;
  throw Error(ErrorCode::NotFound, "unknown operation: " + std::string(name));
}

std::size_t Catalog::count_operations() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(specs_.begin(), specs_.end(), [](const auto& s) { return !s.is_logic(); }));
}

std::vector<const OperationSpec*> Catalog::in_category(Category c) const {
  std::vector<const OperationSpec*> out;
  for (const auto& s : specs_) {
    if (s.category == c) out.push_back(&s);
  }
  return out;
}

std::vector<std::string> Catalog::main_operation_names() const {
  std::vector<std::string> out;
  for (const auto& s : specs_) {
    if (!s.is_logic() && !s.is_filter()) out.push_back(s.name);
  }
  return out;
}

std::vector<std::string> Catalog::operation_names() const {
  std::vector<std::string> out;
  for (const auto& s : specs_) {
    if (!s.is_logic()) out.push_back(s.name);
  }
  return out;
}

std::string Catalog::export_json() const {
  nlohmann::ordered_json ops = nlohmann::ordered_json::array();
  nlohmann::ordered_json connectives = nlohmann::ordered_json::array();
  for (const auto& s : specs_) {
    nlohmann::ordered_json attrs = nlohmann::ordered_json::array();
    for (const auto& a : s.attributes) {
      nlohmann::ordered_json attr;
      attr["name"] = a.name;
      attr["kind"] = to_string(a.kind);
      attr["required"] = a.required;
      if (a.default_value) {
        if (const auto* i = std::get_if<std::int64_t>(&*a.default_value)) {
          attr["default"] = *i;
        } else {
          attr["default"] = std::get<std::string>(*a.default_value);
        }
      } else {
        attr["default"] = nullptr;
      }
      const auto& values = enum_values(a.kind);
      if (!values.empty()) attr["values"] = values;
      attrs.push_back(std::move(attr));
    }
    nlohmann::ordered_json entry;
    entry["name"] = s.name;
    entry["category"] = to_string(s.category);
    entry["attributes"] = std::move(attrs);
    entry["accepts_custom_input"] = s.accepts_custom_input;
    entry["description"] = s.description;
    (s.is_logic() ? connectives : ops).push_back(std::move(entry));
  }
  nlohmann::ordered_json doc;
  doc["schema_version"] = 1;
  doc["operations"] = std::move(ops);
  doc["connectives"] = std::move(connectives);
  return doc.dump(2);
}

namespace {

AttributeSchema required(std::string name, AttrKind kind,
                         std::optional<AttrValue> repair = std::nullopt) {
  return AttributeSchema{std::move(name), kind, true, std::nullopt, std::move(repair)};
}

AttributeSchema optional(std::string name, AttrKind kind, AttrValue def) {
  return AttributeSchema{std::move(name), kind, false, std::move(def), std::nullopt};
}

OperationSpec op(std::string name, Category cat, std::vector<AttributeSchema> attrs, bool custom,
                 std::string description, std::string topic) {
  return OperationSpec{std::move(name), cat,     std::move(attrs), custom, std::move(description),
                       std::move(topic)};
}

}  // namespace

Catalog catalog_default() {
  using C = Category;
  using K = AttrKind;
  std::vector<OperationSpec> ops;
  ops.push_back(op("filter", C::Filter, {required("id", K::InstanceId)}, false,
                   "Access a single instance by its ID", "instance filtering by ID"));
  ops.push_back(op("includes", C::Filter, {required("token", K::Token)}, false,
                   "Filter instances by token occurrence", "filtering by token occurrence"));

  ops.push_back(op("predict", C::Prediction, {}, true, "Get the prediction for the given instance",
                   "prediction"));
  ops.push_back(op("randompredict", C::Prediction, {required("number", K::Count)}, false,
                   "Precompute predictions for a random subset of instances",
                   "random prediction sampling"));
  ops.push_back(op("mistakes", C::Prediction,
                   {required("mode", K::MistakeMode, AttrValue{std::string("count")})}, false,
                   "Count or show incorrectly predicted instances", "model mistakes"));
  ops.push_back(op("score", C::Prediction,
                   {required("metric", K::Metric, AttrValue{std::string("accuracy")})}, false,
                   "Determine the relation between predictions and labels", "evaluation scores"));

  ops.push_back(op("show", C::Data, {}, false, "Showcase a list of instances", "instance display"));
  ops.push_back(op("countdata", C::Data, {}, false, "Count the number of instances",
                   "instance counting"));
  ops.push_back(op("label", C::Data, {}, false,
                   "Describe the label distribution across the dataset", "label distribution"));

  ops.push_back(op("data", C::Meta, {}, false, "Information related to the dataset",
                   "dataset information"));
  ops.push_back(op("model", C::Meta, {}, false, "Metadata of the model", "model metadata"));
  ops.push_back(op("websearch", C::Meta, {}, false,
                   "Look up external information relevant to the instances",
                   "external information retrieval"));

  ops.push_back(op("function", C::About, {}, false, "Inform about the functionality of the system",
                   "system functionality"));
  ops.push_back(op("self", C::About, {}, false, "Self-introduction of the system",
                   "the system itself"));
  ops.push_back(op("qatutorial", C::About,
                   {required("op_name", K::OpName),
                    optional("level", K::ExpertiseLevel, AttrValue{std::string(kSessionLevel)})},
                   false, "Explain a supported operation (tutorial)", "operation tutorials"));

  ops.push_back(op("nlpattribute", C::Explain,
                   {optional("topk", K::TopK, AttrValue{kAllTokens}),
                    optional("method", K::MethodName, AttrValue{std::string("attention")})},
                   true, "Provide feature attribution scores", "feature attribution"));
  ops.push_back(op("rationalize", C::Explain, {}, true, "Explain the output in natural language",
                   "rationalization"));

  ops.push_back(op("keywords", C::NLU, {}, false, "Show common keywords in the data",
                   "keyword extraction"));
  ops.push_back(op("similarity", C::NLU, {required("number", K::Count, AttrValue{std::int64_t{3}})},
                   true, "Output the top k similar instances in the dataset",
                   "similar instance retrieval"));

  ops.push_back(op("cfe", C::Perturbation, {}, true, "Generate counterfactuals",
                   "counterfactual generation"));
  ops.push_back(op("augment", C::Perturbation, {}, true, "Augment the input text",
                   "data augmentation"));

  ops.push_back(op("and", C::Logic, {}, false, "Concatenation of multiple operations",
                   "operation chaining"));
  ops.push_back(op("or", C::Logic, {}, false, "Selection of multiple filters",
                   "filter alternatives"));
  return Catalog(std::move(ops));
}

const Catalog& default_catalog() {
  static const Catalog instance = catalog_default();
  return instance;
}

}  // namespace xaichat
