#include "ckdprog/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ckdprog/csv.hpp"

namespace ckdprog {

QuantileMap QuantileMap::fit(const std::map<int64_t, std::vector<double>>& values_by_concept) {
    QuantileMap qm;
    for (const auto& [concept_id, values] : values_by_concept) {
        if (values.empty()) {
            throw std::runtime_error("empty value list for concept " + std::to_string(concept_id));
        }
        std::vector<double> sorted = values;
        std::sort(sorted.begin(), sorted.end());
        ConceptQuantiles cq;
        cq.train_count = sorted.size();
        const size_t n = sorted.size();
        for (int k = 1; k <= 9; ++k) {
            // Nearest rank: ceil(k/10 * n), 1-based.
            size_t rank = (static_cast<size_t>(k) * n + 9) / 10;
            if (rank < 1) rank = 1;
            cq.cuts[static_cast<size_t>(k - 1)] = sorted[rank - 1];
        }
        qm.concepts_.emplace(concept_id, cq);
    }
    return qm;
}

bool QuantileMap::has_concept(int64_t concept_id) const {
    return concepts_.find(concept_id) != concepts_.end();
}

int QuantileMap::assign(int64_t concept_id, double value) const {
    auto it = concepts_.find(concept_id);
    if (it == concepts_.end()) {
        throw std::runtime_error("no quantiles fitted for concept " + std::to_string(concept_id));
    }
    int below = 0;
    for (double cut : it->second.cuts) {
        if (cut < value) ++below;
    }
    int q = 1 + below;
    return std::clamp(q, 1, 10);
}

void QuantileMap::save(const std::string& path) const {
    std::string out;
    for (const auto& [concept_id, cq] : concepts_) {
        out += std::to_string(concept_id);
        for (double cut : cq.cuts) {
            out += ',';
            out += format_double(cut);
        }
        out += '\n';
    }
    write_file(path, out);
}

QuantileMap QuantileMap::load(const std::string& path) {
    CsvReader r(path);
    QuantileMap qm;
    std::vector<std::string> f;
    while (r.next_row(f)) {
        if (f.size() != 10) r.fail("expected concept_id plus nine cut points");
        int64_t concept_id = r.to_int(f[0], "concept_id");
        ConceptQuantiles cq;
        for (int k = 0; k < 9; ++k) {
            cq.cuts[static_cast<size_t>(k)] = r.to_double(f[static_cast<size_t>(k + 1)], "cut");
            if (k > 0 && cq.cuts[static_cast<size_t>(k)] < cq.cuts[static_cast<size_t>(k - 1)]) {
                r.fail("cut points not non-decreasing");
            }
        }
        if (!qm.concepts_.emplace(concept_id, cq).second) {
            r.fail("duplicate concept " + std::to_string(concept_id));
        }
    }
    return qm;
}

}  // namespace ckdprog
