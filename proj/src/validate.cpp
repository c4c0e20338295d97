#include "xaichat/validate.hpp"

#include <algorithm>

#include "xaichat/text.hpp"

namespace xaichat {

ValidationContext ValidationContext::unbounded() {
  ValidationContext ctx;
  ctx.dataset_size = std::numeric_limits<std::int64_t>::max();
  ctx.focus_available = true;
  return ctx;
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::PureFilter: return "pure_filter";
    case ViolationKind::UnknownOperation: return "unknown_operation";
    case ViolationKind::BadAttribute: return "bad_attribute";
    case ViolationKind::IdOutOfRange: return "id_out_of_range";
    case ViolationKind::OrOutsideFilters: return "or_outside_filters";
    case ViolationKind::NoInstanceInScope: return "no_instance_in_scope";
    case ViolationKind::EmptyToken: return "empty_token";
  }
  return "?";
}

bool ValidationReport::has(ViolationKind kind) const noexcept {
  return std::any_of(violations.begin(), violations.end(),
                     [kind](const Violation& v) { return v.kind == kind; });
}

std::string ValidationReport::summary() const {
  std::vector<std::string> parts;
  parts.reserve(violations.size());
  for (const auto& v : violations) parts.push_back(std::string(to_string(v.kind)) + ": " + v.detail);
  return text::join(parts, "; ");
}

std::int64_t count_limit(std::int64_t dataset_size) noexcept {
  return std::max<std::int64_t>(1, dataset_size);
}

namespace {

void check_attribute(const OperationSpec& spec, const AttributeSchema& schema,
                     const AttrValue& value, const Catalog& catalog,
                     const ValidationContext& context, ValidationReport& report) {
  auto bad = [&](const std::string& why) {
    report.violations.push_back(
        {ViolationKind::BadAttribute, spec.name + "." + schema.name + ": " + why});
  };
  const bool is_default = schema.default_value && *schema.default_value == value;
  switch (schema.kind) {
    case AttrKind::Count:
    case AttrKind::TopK:
    case AttrKind::InstanceId: {
      const auto* n = std::get_if<std::int64_t>(&value);
      if (n == nullptr) return bad("expected an integer");
      if (is_default) return;
      if (schema.kind == AttrKind::InstanceId ? *n < 0 : *n < 1) return bad("out of range");
      if (schema.kind == AttrKind::Count && *n > count_limit(context.dataset_size)) {
        return bad("count " + std::to_string(*n) + " exceeds dataset size");
      }
      return;
    }
    case AttrKind::Token: {
      const auto* s = std::get_if<std::string>(&value);
      if (s == nullptr || text::trim(*s).empty()) bad("empty token");
      return;
    }
    case AttrKind::OpName: {
      const auto* s = std::get_if<std::string>(&value);
      if (s == nullptr) return bad("expected an operation name");
      const auto* target = catalog.find(*s);
      if (target == nullptr || target->is_logic()) bad("unknown operation '" + *s + "'");
      return;
    }
    case AttrKind::MethodName:
    case AttrKind::Metric:
    case AttrKind::MistakeMode:
    case AttrKind::ExpertiseLevel: {
      const auto* s = std::get_if<std::string>(&value);
      if (s == nullptr) return bad("expected a name");
      if (is_default) return;
      const auto& values = enum_values(schema.kind);
      if (std::find(values.begin(), values.end(), *s) == values.end()) {
        bad("'" + *s + "' is not a legal value");
      }
      return;
    }
  }
}

}  // namespace

ValidationReport validate(const QueryAst& ast, const Catalog& catalog,
                          const ValidationContext& context) {
  ValidationReport report;
  if (ast.operations.empty()) {
    report.violations.push_back({ViolationKind::PureFilter, "query contains only filters"});
  }

  for (const auto& f : ast.filters) {
    if (const auto* by_id = std::get_if<ById>(&f)) {
      const bool custom = std::find(context.custom_input_ids.begin(), context.custom_input_ids.end(),
                                    by_id->id) != context.custom_input_ids.end();
      if (by_id->id < 0 || (by_id->id >= context.dataset_size && !custom)) {
        report.violations.push_back(
            {ViolationKind::IdOutOfRange, "id " + std::to_string(by_id->id) + " is not in scope"});
      }
    } else if (text::trim(std::get<Includes>(f).token).empty()) {
      report.violations.push_back({ViolationKind::EmptyToken, "includes needs a token"});
    }
  }

  if (!ast.operations.empty() && !ast.filters.empty() && ast.bridge == Connective::Or) {
    report.violations.push_back(
        {ViolationKind::OrOutsideFilters, "'or' joins a filter to an operation"});
  }
  if (ast.op_links.size() + 1 != std::max<std::size_t>(ast.operations.size(), 1)) {
    report.violations.push_back({ViolationKind::BadAttribute, "operation links do not match"});
  }
  if (std::find(ast.op_links.begin(), ast.op_links.end(), Connective::Or) != ast.op_links.end()) {
    report.violations.push_back({ViolationKind::OrOutsideFilters, "'or' joins two operations"});
  }

  for (const auto& node : ast.operations) {
    const auto* spec = catalog.find(node.op);
    if (spec == nullptr || spec->is_logic() || spec->is_filter()) {
      report.violations.push_back({ViolationKind::UnknownOperation, node.op});
      continue;
    }
    if (node.attrs.size() != spec->attributes.size()) {
      report.violations.push_back(
          {ViolationKind::BadAttribute, node.op + ": expected " +
                                            std::to_string(spec->attributes.size()) +
                                            " attribute(s), got " + std::to_string(node.attrs.size())});
    } else {
      for (std::size_t i = 0; i < node.attrs.size(); ++i) {
        check_attribute(*spec, spec->attributes[i], node.attrs[i], catalog, context, report);
      }
    }
    if (spec->instance_scoped() && ast.filters.empty() && !context.focus_available) {
      report.violations.push_back(
          {ViolationKind::NoInstanceInScope, node.op + " needs an instance in scope"});
    }
  }
  return report;
}

ValidationReport validate(const QueryAst& ast, const Catalog& catalog, std::int64_t dataset_size) {
  ValidationContext ctx;
  ctx.dataset_size = dataset_size;
  return validate(ast, catalog, ctx);
}

}  // namespace xaichat
