#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ckdprog {

// Per-concept decile boundaries. Cut points are the empirical 10th..90th
// percentiles by the nearest-rank rule (no interpolation), so fitting is
// bit-reproducible and order-independent.
class QuantileMap {
   public:
    struct ConceptQuantiles {
        std::array<double, 9> cuts;  // non-decreasing
        size_t train_count = 0;      // in-memory diagnostic, not persisted
    };

    static QuantileMap fit(const std::map<int64_t, std::vector<double>>& values_by_concept);

    bool has_concept(int64_t concept_id) const;

    // Quantile index in 1..10: one plus the number of cut points strictly
    // less than the value. A value equal to a cut point lands in the lower
    // bucket. Throws on unknown concept.
    int assign(int64_t concept_id, double value) const;

    const std::map<int64_t, ConceptQuantiles>& concepts() const { return concepts_; }

    // One line per concept: concept_id plus nine cut points, comma-separated,
    // shortest round-trip decimals.
    void save(const std::string& path) const;
    static QuantileMap load(const std::string& path);

   private:
    std::map<int64_t, ConceptQuantiles> concepts_;
};

}  // namespace ckdprog
