#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "blanket/address.hpp"
#include "blanket/distributions.hpp"
#include "blanket/value.hpp"

namespace blanket {

// Tracked accessor handed to a model function while it evaluates one node.
// Every read is recorded; the reads become exactly the node's parent edges.
class NodeReader {
 public:
  virtual ~NodeReader() = default;
  virtual Value value(const Address& addr) = 0;

  double real(const Address& addr) { return value(addr).as_real(); }
  bool boolean(const Address& addr) { return value(addr).as_boolean(); }
  std::int64_t index(const Address& addr) { return value(addr).as_index(); }
};

// A declarative generative model: a pure function from an address to that
// node's distribution, where dependencies are expressed as reader accesses.
// Re-evaluating an address against identical reads must yield an identical
// distribution.
struct Model {
  std::string name;
  std::function<Distribution(const Address&, NodeReader&)> fn;
  std::map<Address, Value> observations;  // declared observed nodes and their values
  std::vector<Address> queries;           // declared query roots

  Distribution evaluate(const Address& addr, NodeReader& reader) const { return fn(addr, reader); }

  bool declares_observed(const Address& addr) const { return observations.count(addr) > 0; }
};

}  // namespace blanket
