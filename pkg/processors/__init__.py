# Stage drivers for the hftnet pipeline
