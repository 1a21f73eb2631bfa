/* Scores two models and fits a frontier through the C API.
 *
 *   cc example.c -I../include ../../../target/debug/libenerprof_ffi.a -lpthread -ldl -lm
 */
#include <stdio.h>

#include "enerprof.h"

static int check(EpStatus s, const char *what) {
    char msg[256];
    if (s == EP_STATUS_OK) return 0;
    ep_last_error(msg, sizeof msg);
    fprintf(stderr, "%s failed (%d): %s\n", what, (int)s, msg);
    return 1;
}

int main(void) {
    EpSampleSeries *series = ep_series_new();
    uint64_t marks[10];
    EpMetrics m;
    for (uint64_t k = 0; k <= 100; k++) {
        if (check(ep_series_push(series, k * 10000000ull, 200.0), "push")) return 1;
    }
    for (int i = 0; i < 10; i++) marks[i] = (uint64_t)(i + 1) * 100000000ull;
    if (check(ep_series_derive(series, 0, marks, 10, 8, &m), "derive")) return 1;
    ep_series_free(series);
    printf("energy_per_image %.6f\n", m.energy_per_image);
    printf("avg_power %.6f\n", m.avg_power);

    EpScoreParams p = {0.5, 1.0, 50.0};
    double s;
    bool kept;
    if (check(ep_ratio_score(80.0, 2.0, p, &s, &kept), "ratio")) return 1;
    printf("ratio %.6f kept %d\n", s, (int)kept);
    if (check(ep_manhattan_score(80.0, 2.0, p, EP_ENERGY_SCALE_LITERAL, &s), "manhattan")) return 1;
    printf("manhattan %.6f\n", s);

    double e[] = {0.01, 0.02, 0.05, 0.1, 0.3, 1.0};
    double a[] = {70.0, 74.0, 78.0, 80.5, 83.0, 85.0};
    EpFrontierFit *fit = NULL;
    double back;
    if (check(ep_frontier_fit(e, a, 6, &fit), "fit")) return 1;
    if (check(ep_frontier_eval(fit, 0.1, &s), "eval")) return 1;
    if (check(ep_frontier_extrapolate(fit, s, &back), "extrapolate")) return 1;
    printf("roundtrip %.6f\n", back);
    ep_frontier_free(fit);

    if (ep_pearson(e, a, 1, &s) == EP_STATUS_OK) return 1;
    printf("error %s\n", ep_last_error(NULL, 0) > 0 ? "set" : "missing");
    return 0;
}
