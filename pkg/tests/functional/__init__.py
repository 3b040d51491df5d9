# Functional tests package 