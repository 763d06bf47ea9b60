# hbcs package initialization
