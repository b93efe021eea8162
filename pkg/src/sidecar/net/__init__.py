"""Wire format, transports and node daemons."""
