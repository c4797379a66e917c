#include "attrcloak/schema.hpp"

#include <set>
#include <sstream>

#include "attrcloak/errors.hpp"

namespace attrcloak {

void AttributeSchema::validate() const {
  if (attrs.empty()) throw ConfigError("schema: needs at least one attribute");
  std::set<std::string> seen;
  for (const AttributeDef& a : attrs) {
    if (a.name.empty()) throw ConfigError("schema: attribute name must be non-empty");
    if (a.classes < 2)
      throw ConfigError("schema: attribute '" + a.name + "' needs >= 2 classes, got " +
                        std::to_string(a.classes));
    if (!seen.insert(a.name).second)
      throw ConfigError("schema: duplicate attribute name '" + a.name + "'");
  }
}

int AttributeSchema::index_of(const std::string& name) const {
  for (size_t i = 0; i < attrs.size(); ++i)
    if (attrs[i].name == name) return static_cast<int>(i);
  std::ostringstream os;
  os << "schema: unknown attribute '" << name << "'; known:";
  for (const AttributeDef& a : attrs) os << " " << a.name;
  throw ConfigError(os.str());
}

int AttributeSchema::resolve(const std::string& ref) const {
  for (size_t i = 0; i < attrs.size(); ++i)
    if (attrs[i].name == ref) return static_cast<int>(i);
  std::string digits;
  if (ref.rfind("attr", 0) == 0)
    digits = ref.substr(4);
  else
    digits = ref;
  if (!digits.empty() && digits.find_first_not_of("0123456789") == std::string::npos) {
    int idx = std::stoi(digits);
    if (idx >= 0 && idx < k()) return idx;
    throw ConfigError("schema: attribute index " + std::to_string(idx) + " out of range [0, " +
                      std::to_string(k()) + ")");
  }
  return index_of(ref);  // throws with the known-names message
}

std::string AttributeSchema::hash() const {
  uint64_t h = 1469598103934665603ull;
  auto eat = [&](const void* p, size_t n) {
    const unsigned char* c = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 1099511628211ull;
    }
  };
  for (const AttributeDef& a : attrs) {
    eat(a.name.data(), a.name.size());
    unsigned char sep = 0;
    eat(&sep, 1);
    uint32_t c = static_cast<uint32_t>(a.classes);
    eat(&c, 4);
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

bool AttributeSchema::operator==(const AttributeSchema& o) const {
  if (attrs.size() != o.attrs.size()) return false;
  for (size_t i = 0; i < attrs.size(); ++i)
    if (attrs[i].name != o.attrs[i].name || attrs[i].classes != o.attrs[i].classes) return false;
  return true;
}

AttributeSchema AttributeSchema::default_schema() {
  return AttributeSchema{{{"gender", 2}, {"smiling", 2}, {"attractive", 2}, {"makeup", 2},
                          {"cheekbones", 2}}};
}

}  // namespace attrcloak
