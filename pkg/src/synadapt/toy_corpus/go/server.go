package main

import (
	"encoding/json"
	"log"
	"net/http"
)

type Status struct {
	Name    string `json:"name"`
	Healthy bool   `json:"healthy"`
}

func statusHandler(w http.ResponseWriter, r *http.Request) {
	w.Header().Set("Content-Type", "application/json")
	if err := json.NewEncoder(w).Encode(Status{Name: "demo", Healthy: true}); err != nil {
		http.Error(w, err.Error(), http.StatusInternalServerError)
	}
}

func main() {
	http.HandleFunc("/status", statusHandler)
	log.Fatal(http.ListenAndServe(":8080", nil))
}
