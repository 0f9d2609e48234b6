namespace stmlab {}
