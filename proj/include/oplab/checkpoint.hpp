#pragma once

#include <map>
#include <string>
#include <vector>

namespace oplab {

/// A named collection of shaped float64 tensors, serializable to JSON.
/// Used for policy checkpoints: network parameters, normalization stats,
/// and optimizer state all fit this shape-plus-data form.
class TensorStore {
public:
    struct Entry {
        std::vector<int> shape;
        std::vector<double> data;
    };

    void put(const std::string& name, std::vector<int> shape, std::vector<double> data);
    void put_scalar(const std::string& name, double v);
    void put_vector(const std::string& name, const std::vector<double>& v);

    bool contains(const std::string& name) const { return entries_.count(name) > 0; }
    const Entry& get(const std::string& name) const;
    double get_scalar(const std::string& name) const;
    const std::vector<double>& get_vector(const std::string& name) const;

    const std::map<std::string, Entry>& entries() const { return entries_; }

    std::string to_json() const;
    static TensorStore from_json(const std::string& text);

    void save(const std::string& path) const;
    static TensorStore load(const std::string& path);

private:
    std::map<std::string, Entry> entries_;
};

}  // namespace oplab
