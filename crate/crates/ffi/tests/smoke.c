#include <stdio.h>
#include <string.h>
#include "comblab.h"

int main(void) {
    ComblabDocument *p = NULL;
    if (comblab_demo("epr", &p) != COMBLAB_STATUS_OK) return 10;
    if (strcmp(comblab_document_kind(p), "protocol") != 0) return 11;
    char *report = NULL;
    if (comblab_validate(p, 1e-8, &report) != COMBLAB_STATUS_OK) return 12;
    comblab_string_free(report);
    if (comblab_conceal(p, 7, &report) != COMBLAB_STATUS_OK) return 13;
    if (strstr(report, "\"pass\":true") == NULL) return 14;
    comblab_string_free(report);
    comblab_document_free(p);
    if (comblab_document_parse("[", &p) != COMBLAB_STATUS_PARSE) return 15;
    if (strlen(comblab_last_error()) == 0) return 16;
    puts("ok");
    return 0;
}
