#include "east/flops.hpp"

#include <cmath>
#include <stdexcept>

#include "east/erk.hpp"

namespace east {

namespace {

FlopsReport assemble(const ArchDescription& d, const std::vector<double>& site_density) {
    FlopsReport rep;
    rep.census = d.census();
    int64_t unique_active = 0;
    for (size_t i = 0; i < d.sites.size(); ++i) {
        const auto& s = d.sites[i];
        FlopsRow row;
        row.name = s.name;
        row.macs_dense = s.macs();
        row.density = site_density[static_cast<size_t>(s.owner)];
        row.macs_sparse = row.density * static_cast<double>(row.macs_dense);
        row.shared_reuse = s.owner != static_cast<int>(i);
        rep.total_macs_dense += row.macs_dense;
        rep.total_macs_sparse += row.macs_sparse;
        if (!row.shared_reuse)
            unique_active += std::llround(row.density * static_cast<double>(s.weight_numel()));
        rep.rows.push_back(std::move(row));
    }
    rep.census.unique_active = unique_active;
    return rep;
}

}  // namespace

FlopsReport flops_report_dense(const ArchSpec& spec) {
    const ArchDescription d = describe_arch(spec);
    return assemble(d, std::vector<double>(d.sites.size(), 1.0));
}

FlopsReport flops_report(const ArchSpec& spec, double global_density, bool erk) {
    if (global_density >= 1.0) return flops_report_dense(spec);
    const ArchDescription d = describe_arch(spec);
    const int64_t target =
        std::llround(global_density * static_cast<double>(d.masked_theoretical()));
    const int64_t stored = d.masked_stored();
    if (target > stored)
        throw std::invalid_argument("flops: density " + std::to_string(global_density) +
                                    " needs more active weights than the stored tensors hold");

    std::vector<double> density(d.sites.size(), 0.0);
    if (erk) {
        std::vector<Shape> shapes;
        std::vector<size_t> owners;
        for (size_t i = 0; i < d.sites.size(); ++i) {
            const auto& s = d.sites[i];
            if (s.owner != static_cast<int>(i)) continue;
            owners.push_back(i);
            shapes.push_back(s.is_linear ? Shape{s.cin, s.cout}
                                         : Shape{s.cout, s.cin, s.k, s.k});
        }
        const ErkPlan plan =
            erk_plan(shapes, static_cast<double>(target) / static_cast<double>(stored), target);
        for (size_t j = 0; j < owners.size(); ++j)
            density[owners[j]] = static_cast<double>(plan.active[j]) /
                                 static_cast<double>(shape_numel(shapes[j]));
    } else {
        const double p = static_cast<double>(target) / static_cast<double>(stored);
        for (size_t i = 0; i < d.sites.size(); ++i)
            if (d.sites[i].owner == static_cast<int>(i)) density[i] = p;
    }
    return assemble(d, density);
}

FlopsReport flops_report(const ArchSpec& spec, const std::vector<double>& owner_density) {
    const ArchDescription d = describe_arch(spec);
    std::vector<double> density(d.sites.size(), 0.0);
    size_t j = 0;
    for (size_t i = 0; i < d.sites.size(); ++i) {
        if (d.sites[i].owner != static_cast<int>(i)) continue;
        if (j >= owner_density.size())
            throw std::invalid_argument("flops: expected one density per owner tensor");
        density[i] = owner_density[j++];
    }
    if (j != owner_density.size())
        throw std::invalid_argument("flops: " + std::to_string(owner_density.size()) +
                                    " densities for " + std::to_string(j) + " owner tensors");
    return assemble(d, density);
}

}  // namespace east
