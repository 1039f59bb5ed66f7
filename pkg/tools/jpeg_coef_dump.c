/* Dump luma quantized DCT coefficients of a JPEG file using libjpeg.
 *
 * Output (stdout):
 *   # size <width> <height>
 *   # blocks <width_in_blocks> <height_in_blocks>
 *   # q <64 entries, natural order>
 *   <bx> <by> <c0> ... <c63>      one line per block, natural order
 *
 * Build: gcc -O2 -o jpeg_coef_dump jpeg_coef_dump.c -ljpeg
 */
#include <stdio.h>
#include <stdlib.h>
#include <jpeglib.h>

int main(int argc, char **argv) {
    if (argc != 2) {
        fprintf(stderr, "usage: %s file.jpg\n", argv[0]);
        return 1;
    }
    FILE *fp = fopen(argv[1], "rb");
    if (!fp) {
        perror(argv[1]);
        return 1;
    }
    struct jpeg_decompress_struct cinfo;
    struct jpeg_error_mgr jerr;
    cinfo.err = jpeg_std_error(&jerr);
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, fp);
    jpeg_read_header(&cinfo, TRUE);
    jvirt_barray_ptr *coefs = jpeg_read_coefficients(&cinfo);

    jpeg_component_info *comp = &cinfo.comp_info[0];
    /* virtual arrays are padded up to a multiple of the sampling factors */
    JDIMENSION wb = comp->width_in_blocks;
    JDIMENSION hb = comp->height_in_blocks;
    wb = (wb + comp->h_samp_factor - 1) / comp->h_samp_factor * comp->h_samp_factor;
    hb = (hb + comp->v_samp_factor - 1) / comp->v_samp_factor * comp->v_samp_factor;

    printf("# size %u %u\n", cinfo.image_width, cinfo.image_height);
    printf("# blocks %u %u\n", wb, hb);
    printf("# q");
    for (int i = 0; i < DCTSIZE2; i++)
        printf(" %u", comp->quant_table->quantval[i]);
    printf("\n");

    for (JDIMENSION by = 0; by < hb; by++) {
        JBLOCKARRAY row = (cinfo.mem->access_virt_barray)(
            (j_common_ptr)&cinfo, coefs[0], by, 1, FALSE);
        for (JDIMENSION bx = 0; bx < wb; bx++) {
            printf("%u %u", bx, by);
            for (int i = 0; i < DCTSIZE2; i++)
                printf(" %d", row[0][bx][i]);
            printf("\n");
        }
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    fclose(fp);
    return 0;
}
