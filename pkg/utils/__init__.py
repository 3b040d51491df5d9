# Utils package for czleak
