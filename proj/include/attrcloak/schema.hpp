#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace attrcloak {

struct AttributeDef {
  std::string name;
  int classes = 2;
};

// Ordered attribute list. Order is load-bearing: label vectors, band indices,
// and head order all follow it.
struct AttributeSchema {
  std::vector<AttributeDef> attrs;

  int k() const { return static_cast<int>(attrs.size()); }

  // ConfigError if empty, any class count < 2, or duplicate names.
  void validate() const;

  // Exact name lookup; ConfigError listing known names when absent.
  int index_of(const std::string& name) const;

  // Accepts a schema name, "attr<i>", or a bare integer index.
  int resolve(const std::string& ref) const;

  // FNV-1a over names and class counts, hex encoded. Guards checkpoints
  // against datasets with a different schema.
  std::string hash() const;

  bool operator==(const AttributeSchema& o) const;

  // 5 binary attributes: gender, smiling, attractive, makeup, cheekbones.
  static AttributeSchema default_schema();
};

}  // namespace attrcloak
