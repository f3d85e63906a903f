#include "oplab/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace oplab {

using json = nlohmann::json;

void TensorStore::put(const std::string& name, std::vector<int> shape, std::vector<double> data) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    if (n != data.size()) throw std::invalid_argument("TensorStore: shape/data mismatch for " + name);
    entries_[name] = Entry{std::move(shape), std::move(data)};
}

void TensorStore::put_scalar(const std::string& name, double v) { put(name, {}, {v}); }

void TensorStore::put_vector(const std::string& name, const std::vector<double>& v) {
    put(name, {static_cast<int>(v.size())}, v);
}

const TensorStore::Entry& TensorStore::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("TensorStore: missing entry " + name);
    return it->second;
}

double TensorStore::get_scalar(const std::string& name) const {
    const Entry& e = get(name);
    if (e.data.size() != 1) throw std::invalid_argument("TensorStore: " + name + " is not a scalar");
    return e.data[0];
}

const std::vector<double>& TensorStore::get_vector(const std::string& name) const { return get(name).data; }

std::string TensorStore::to_json() const {
    json root = json::object();
    for (const auto& [name, e] : entries_) {
        root[name] = {{"shape", e.shape}, {"data", e.data}};
    }
    return root.dump();
}

TensorStore TensorStore::from_json(const std::string& text) {
    TensorStore store;
    json root = json::parse(text);
    for (auto it = root.begin(); it != root.end(); ++it) {
        store.put(it.key(), it.value().at("shape").get<std::vector<int>>(),
                  it.value().at("data").get<std::vector<double>>());
    }
    return store;
}

void TensorStore::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << to_json() << '\n';
}

TensorStore TensorStore::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

}  // namespace oplab
