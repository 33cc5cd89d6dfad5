#include <stdio.h>
#include "kmachine.h"

int main(void) {
    int64_t coords[] = {0, 10, 20, 30, 40, 50, 60, 70};
    KmDataset *ds = NULL;
    if (km_dataset_from_coords(coords, 8, 1, &ds) != KM_STATUS_OK) {
        fprintf(stderr, "load: %s\n", km_last_error());
        return 1;
    }
    KmQueryParams p = km_query_params_default();
    p.k = 3;
    p.l = 3;
    p.verify = 1;
    int64_t q[] = {29};
    KmResult *r = NULL;
    if (km_query(ds, q, 1, &p, &r) != KM_STATUS_OK) {
        fprintf(stderr, "query: %s\n", km_last_error());
        return 1;
    }
    uint64_t ids[3];
    size_t n = km_result_ids(r, ids, 3);
    printf("ids");
    for (size_t i = 0; i < n; i++)
        printf(" %llu", (unsigned long long)ids[i]);
    printf(" %s\n", km_result_correct(r) == 1 ? "ok" : "wrong");

    p.k = 1;
    KmResult *bad = NULL;
    int st = km_query(ds, q, 1, &p, &bad);
    km_result_free(r);
    km_dataset_free(ds);
    return st == KM_STATUS_INVALID_INPUT && bad == NULL ? 0 : 1;
}
