#include <omp.h>

#include "cpdewarp/kernels.hpp"
#include "cpdewarp/parallel.hpp"

namespace cpd {

void set_thread_count(int n) {
    omp_set_num_threads(n > 0 ? n : omp_get_num_procs());
}

int thread_count() { return omp_get_max_threads(); }

namespace kernels::omp {

void tps_evaluate(const TpsModel& model, BackwardMap& out) {
    const int h = out.height();
#pragma omp parallel for schedule(dynamic, 8)
    for (int i = 0; i < h; ++i) tps_row(model, i, out.row(i));
}

void mesh_map(const ReferenceSpec& reference, const ControlGrid& control, BackwardMap& out) {
    const int h = out.height();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < h; ++i) mesh_row(reference, control, i, out.row(i));
}

void remap(const ImageBuffer& src, const BackwardMap& map, std::array<std::uint8_t, 3> fill,
           ImageBuffer& out) {
    const int h = map.height();
    const int w = map.width();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const Point2& p = map.at(i, j);
            sample_bilinear(src, p.x, p.y, fill, out.pixel(i, j));
        }
    }
}

}  // namespace kernels::omp
}  // namespace cpd
